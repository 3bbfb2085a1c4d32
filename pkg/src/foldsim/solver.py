"""Implicit dynamics and quasi-static equilibrium solvers.

Dynamics advance M qddot + C qdot + grad Pi(q) = f_ext with a
velocity-form implicit Euler step: solve for v+ such that

    r(v+) = M (v+ - v)/dt + C v+ + grad Pi(q + dt v+) - f_ext(q + dt v+, v+, t+dt) = 0

on the free DOFs, then q+ = q + dt v+.  C = alpha_damp * M.  Prescribed
DOFs take their velocities from the boundary tables so accepted steps
match the tables exactly; reactions are the residual entries there.

The quasi-static solver drives grad Pi - f_ext = 0 through a schedule of
load times with warm starts, bisecting load increments on Newton failure
and raising SnapDetected when bisection bottoms out.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    NewtonDiverged,
    OppositeNormals,
    PenetrationUnderflow,
    SingularSystem,
    SnapDetected,
)

_RETRYABLE = (PenetrationUnderflow, OppositeNormals)


class Table:
    """Piecewise-linear schedule; constant extrapolation at the ends."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be equal-length 1-D")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be non-decreasing")

    def __call__(self, t):
        return float(np.interp(t, self.times, self.values))

    @property
    def t_end(self):
        return float(self.times[-1])


FREE, FIXED, PRESCRIBED = 0, 1, 2


class BoundarySpec:
    """Per-DOF condition: free, fixed, or prescribed by a time table."""

    def __init__(self, n_dofs):
        self.kind = np.zeros(n_dofs, dtype=np.uint8)
        self.tables: dict[int, Table] = {}

    def fix(self, dofs):
        self.kind[np.asarray(dofs, dtype=np.int64)] = FIXED

    def prescribe(self, dof, times, values):
        self.kind[dof] = PRESCRIBED
        self.tables[int(dof)] = Table(times, values)

    @property
    def free_mask(self):
        return self.kind == FREE

    def check_coverage(self, t_final):
        for dof, tab in self.tables.items():
            if tab.t_end < t_final - 1e-12:
                raise ValueError(
                    f"table for dof {dof} ends at {tab.t_end} < {t_final}")

    def apply_positions(self, q, t):
        """Set prescribed entries of q from the tables at time t."""
        for dof, tab in self.tables.items():
            q[dof] = tab(t)

    def constrained_velocities(self, q, t_new, dt):
        out = {}
        for dof, tab in self.tables.items():
            out[dof] = (tab(t_new) - q[dof]) / dt
        return out


@dataclass
class SolverConfig:
    dt: float = 1e-2
    alpha_damp: float = 0.0
    newton_tol: float = 1e-8
    max_newton: int = 40
    max_backtracks: int = 25
    dt_min: float = 1e-6
    qs_min_step: float = 1e-4     # smallest load-step fraction before snap

    def __post_init__(self):
        if self.dt <= 0 or self.newton_tol <= 0:
            raise ValueError("dt and newton_tol must be positive")


@dataclass
class SystemState:
    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    def copy(self):
        return SystemState(self.q.copy(), self.qdot.copy(), self.t)


@dataclass
class StepReport:
    iterations: int
    residual: float
    reactions: np.ndarray
    dt: float
    backtracks: int = 0
    residual_history: list = field(default_factory=list)


def linear_solve(K, rhs):
    """Direct sparse solve with a residual guarantee.

    Raises SingularSystem when the factorization fails or the relative
    residual exceeds 1e-10; callers regularize with lambda I and retry.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.size == 0:
        return rhs.copy()
    K = sp.csc_matrix(K)
    try:
        lu = spla.splu(K)
        x = lu.solve(rhs)
    except Exception as exc:  # pragma: no cover - scipy error classes vary
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    bnorm = np.linalg.norm(rhs)
    if bnorm > 0:
        knorm = np.abs(K).sum(axis=1).max()

        def backward_error(xx):
            # normwise backward error; reaches eps even when K is nearly
            # singular and the raw residual/|b| cannot
            return np.linalg.norm(K @ xx - rhs) / (
                knorm * np.linalg.norm(xx) + bnorm)

        for _ in range(3):
            if backward_error(x) <= 1e-12:
                break
            x = x + lu.solve(rhs - K @ x)
        raw = np.linalg.norm(K @ x - rhs) / bnorm
        if (raw > 1e-10 and backward_error(x) > 1e-12) \
                or not np.all(np.isfinite(x)):
            raise SingularSystem(f"relative residual {raw:.2e}")
    return x


def _solve_regularized(K, rhs):
    try:
        return linear_solve(K, rhs)
    except SingularSystem:
        lam = 1e-8 * np.abs(K).sum(axis=1).max()
        K2 = K + lam * sp.identity(K.shape[0], format="csr")
        return linear_solve(K2, rhs)


def _triplet_matrix(trip, n):
    if trip[0].size == 0:
        return None
    return sp.coo_matrix((trip[2], (trip[0], trip[1])), shape=(n, n)).tocsr()


def implicit_euler_step(state, model, loads, bc, cfg):
    """One implicit Euler step; returns (new state, StepReport).

    Newton iterations use backtracking line search (halving until the
    residual norm decreases).  Raises NewtonDiverged past max_newton, and
    propagates PenetrationUnderflow / OppositeNormals as retry signals.
    """
    n = model.dof.total
    q, v, t = state.q, state.qdot, state.t
    dt = cfg.dt
    t_new = t + dt
    free = bc.free_mask

    vnew = v.copy()
    vnew[bc.kind == FIXED] = 0.0
    for dof, vval in bc.constrained_velocities(q, t_new, dt).items():
        vnew[dof] = vval

    M = loads.mass
    alpha = cfg.alpha_damp

    def residual(vn):
        qn = q + dt * vn
        grad = model.gradient(qn)
        f_ext, jq, jv, _ = loads.assemble(qn, vn, t_new)
        r = M * (vn - v) / dt + alpha * M * vn + grad - f_ext
        return r, qn, jq, jv

    r, qn, jq, jv = residual(vnew)
    rnorm = np.linalg.norm(r[free])
    history = [rnorm]
    iterations = 0
    backtracks = 0
    while rnorm > cfg.newton_tol:
        if iterations >= cfg.max_newton:
            raise NewtonDiverged(f"residual {rnorm:.3e} after {iterations} iters")
        K = model.tangent(qn)
        J = sp.diags(M / dt + alpha * M) + dt * K
        Jq = _triplet_matrix(jq, n)
        if Jq is not None:
            J = J - dt * Jq
        Jv = _triplet_matrix(jv, n)
        if Jv is not None:
            J = J - Jv
        J = J.tocsr()
        Jff = J[free][:, free]
        delta = _solve_regularized(Jff, -r[free])

        step = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            v_try = vnew.copy()
            v_try[free] += step * delta
            try:
                r_try, q_try, jq_t, jv_t = residual(v_try)
            except _RETRYABLE:
                step *= 0.5
                backtracks += 1
                continue
            rn_try = np.linalg.norm(r_try[free])
            if rn_try < rnorm:
                vnew, r, qn, jq, jv = v_try, r_try, q_try, jq_t, jv_t
                rnorm = rn_try
                accepted = True
                break
            step *= 0.5
            backtracks += 1
        if not accepted:
            raise NewtonDiverged(f"line search stalled at residual {rnorm:.3e}")
        history.append(rnorm)
        iterations += 1

    report = StepReport(iterations=iterations, residual=rnorm,
                        reactions=r.copy(), dt=dt, backtracks=backtracks,
                        residual_history=history)
    return SystemState(q=qn, qdot=vnew, t=t_new), report


def dynamic_run(state, model, loads, bc, cfg, duration, on_step=None,
                max_steps=None):
    """March implicit Euler to t = state.t + duration.

    Halves the step on NewtonDiverged / PenetrationUnderflow /
    OppositeNormals down to cfg.dt_min, then re-raises.  ``on_step`` is
    called with (state, report) after every accepted step.
    """
    t_end = state.t + duration
    steps = 0
    while state.t < t_end - 1e-12:
        dt_try = min(cfg.dt, t_end - state.t)
        while True:
            try:
                new_state, report = implicit_euler_step(
                    state, model, loads, bc, replace(cfg, dt=dt_try))
                break
            except (NewtonDiverged, *_RETRYABLE):
                dt_try *= 0.5
                if dt_try < cfg.dt_min:
                    raise
        state = new_state
        steps += 1
        if on_step is not None:
            on_step(state, report)
        if max_steps is not None and steps >= max_steps:
            break
    return state


def _minimize_at(model, loads, bc, cfg, q_start, s):
    """Newton minimization of the total static potential at load time s.

    Statics sees only conservative loads (friction vanishes at v = 0), so
    the merit function is Phi = Pi + load potential, which stays a valid
    descent measure even where the tangent is indefinite or has mechanism
    modes at the noise floor (where a pure residual-norm line search can
    stall).  The step solves (K - Jq + lam diag) delta = -r with lam
    escalated Levenberg-style until the direction descends and a
    backtracking line search on Phi accepts.

    Converges when the free-DOF residual drops below newton_tol; the
    returned residual vector also carries the reactions on the
    constrained DOFs.
    """
    n = model.dof.total
    free = bc.free_mask
    qn = q_start.copy()
    bc.apply_positions(qn, s)
    zero_v = np.zeros(n)

    def evaluate(qq):
        grad = model.gradient(qq)
        f_ext, jq, _, pot = loads.assemble(qq, zero_v, s)
        phi = model.total_energy(qq) + pot
        return grad - f_ext, jq, phi

    r, jq, phi = evaluate(qn)
    rnorm = np.linalg.norm(r[free])
    history = [rnorm]
    iterations = 0
    lam = 0.0
    while rnorm > cfg.newton_tol:
        if iterations >= cfg.max_newton:
            raise NewtonDiverged(f"qs residual {rnorm:.3e}")
        K = model.tangent(qn)
        Jq = _triplet_matrix(jq, n)
        J = (K - Jq).tocsr() if Jq is not None else K.tocsr()
        Jff = J[free][:, free]
        dscale = max(np.abs(Jff.diagonal()).max(), 1e-30)
        accepted = False
        for _ in range(60):
            Jmod = Jff + lam * dscale * sp.identity(Jff.shape[0],
                                                    format="csr")
            try:
                delta = _solve_regularized(Jmod, -r[free])
            except SingularSystem:
                lam = max(10.0 * lam, 1e-10)
                continue
            if float(r[free] @ delta) >= 0.0:
                lam = max(10.0 * lam, 1e-10)
                continue
            step = 1.0
            for _ in range(cfg.max_backtracks):
                q_try = qn.copy()
                q_try[free] += step * delta
                try:
                    r_try, jq_t, phi_try = evaluate(q_try)
                except _RETRYABLE:
                    step *= 0.5
                    continue
                rn_try = np.linalg.norm(r_try[free])
                if phi_try < phi or rn_try < rnorm:
                    qn, r, jq, phi, rnorm = q_try, r_try, jq_t, phi_try, \
                        rn_try
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                lam = lam / 10.0 if lam > 1e-12 else 0.0
                break
            lam = max(10.0 * lam, 1e-10)
            if lam > 1e10:
                break
        if not accepted:
            raise NewtonDiverged("qs step search stalled")
        history.append(rnorm)
        iterations += 1
    return qn, r, iterations, history


def quasi_static_solve(model, loads, bc, cfg, load_times, state0=None,
                       on_step=None):
    """Equilibrium continuation along a schedule of load times.

    For each target time the prescribed DOFs are set from their tables and
    a Levenberg-damped Newton minimizes the static potential on the free
    DOFs, warm-started from the previous equilibrium.  Failed increments
    are bisected; when the increment falls below qs_min_step times the
    original spacing a SnapDetected carrying the last converged state is
    raised.

    Returns a list of (time, SystemState, StepReport).
    """
    n = model.dof.total
    if state0 is None:
        q = model.rest_state()
    else:
        q = state0.q.copy()
    results = []

    load_times = list(load_times)
    prev_s = load_times[0] if load_times else 0.0
    pending = list(load_times)
    base_spacing = max((load_times[-1] - load_times[0]) / max(len(load_times) - 1, 1),
                      1e-30) if len(load_times) > 1 else 1.0
    while pending:
        s = pending[0]
        try:
            qn, r, iters, history = _minimize_at(model, loads, bc, cfg, q, s)
        except (NewtonDiverged, *_RETRYABLE):
            mid = 0.5 * (prev_s + s)
            if abs(s - mid) < cfg.qs_min_step * base_spacing:
                raise SnapDetected(
                    f"load step stalled near t={prev_s:.6g}",
                    state=SystemState(q=q.copy(), qdot=np.zeros(n), t=prev_s),
                    load_fraction=prev_s)
            pending.insert(0, mid)
            continue
        q = qn
        pending.pop(0)
        was_scheduled = s in load_times
        report = StepReport(iterations=iters, residual=history[-1],
                            reactions=r.copy(), dt=0.0,
                            residual_history=history)
        st = SystemState(q=q.copy(), qdot=np.zeros(n), t=s)
        if was_scheduled:
            results.append((s, st, report))
            if on_step is not None:
                on_step(st, report)
        prev_s = s
    return results


def fd_verify(model, q, mode="gradient", step_scale=1e-6, loads=None):
    """Finite-difference oracle for the analytic gradient or tangent.

    Central differences of Pi (gradient mode) or of the gradient (tangent
    mode) against the assembled quantities.  Returns a dict with the max
    relative error and the worst DOF index.
    """
    q = np.asarray(q, dtype=np.float64)
    h = step_scale * (model.mesh.bbox_scale() or 1.0)
    n = q.shape[0]
    if mode == "gradient":
        g = model.gradient(q)
        fd = np.empty(n)
        for i in range(n):
            qp = q.copy(); qp[i] += h
            qm = q.copy(); qm[i] -= h
            fd[i] = (model.total_energy(qp) - model.total_energy(qm)) / (2 * h)
        denom = max(np.linalg.norm(fd), 1e-300)
        err = np.abs(g - fd)
        rel = np.linalg.norm(g - fd) / denom
        return {"mode": mode, "rel_error": float(rel),
                "max_abs_error": float(err.max()),
                "worst_dof": int(np.argmax(err))}
    if mode == "tangent":
        K = np.asarray(model.tangent(q).todense())
        fd = np.empty((n, n))
        for i in range(n):
            qp = q.copy(); qp[i] += h
            qm = q.copy(); qm[i] -= h
            fd[:, i] = (model.gradient(qp) - model.gradient(qm)) / (2 * h)
        denom = max(np.abs(fd).max(), 1e-300)
        err = np.abs(K - fd)
        worst = int(np.argmax(err.max(axis=0)))
        return {"mode": mode, "rel_error": float(err.max() / denom),
                "max_abs_error": float(err.max()), "worst_dof": worst}
    raise ValueError(f"unknown fd_verify mode {mode!r}")


def ritz_fold_angle(eta, beta, phi0):
    """Closed-form fold angle of the single-fold tension problem.

    phi = beta + eta (phi0 - beta) / (1/2 + eta); beta is the rigid
    kinematic plateau (eta -> 0), phi0 the rest angle (eta -> inf).
    """
    eta = np.asarray(eta, dtype=np.float64)
    if np.any(eta < 0):
        raise ValueError("eta must be >= 0")
    return beta + eta * (phi0 - beta) / (0.5 + eta)


def mechanical_energy(model, loads, state):
    """Kinetic + elastic + conservative load potential of a state."""
    kin = 0.5 * float(np.sum(loads.mass * state.qdot ** 2))
    br = model.energy_breakdown(state.q)
    _, _, _, pot = loads.assemble(state.q, state.qdot, state.t)
    return kin + br.total + pot
