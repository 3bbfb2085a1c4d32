"""External loads: gravity, plane contact, regularized friction, magnetics.

All loads act on vertex degrees of freedom only; entries at the virtual
fold-angle slots are always zero.  Every evaluator returns its force
contribution plus sparse tangent triplets so the implicit solver can stay
consistent:

    residual r = M vdot + C v + grad Pi - f_ext(q, v, t)

so position tangents enter Newton as -df/dq and velocity tangents as
-df/dv (see ``solver``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateFace, PenetrationUnderflow

_PEN_FLOOR = 1e-6


@dataclass(frozen=True)
class ContactParams:
    """Penalty contact against a static half-space.

    The barrier activates below the threshold distance d_tilde:
    Psi(d) = k (d - d_tilde)^2 ln(d_tilde / d), which is C1 at activation,
    strictly repulsive, and diverges as d -> 0.
    """

    stiffness: float
    d_tilde: float
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.stiffness <= 0 or self.d_tilde <= 0:
            raise ValueError("contact stiffness and threshold must be positive")
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("contact normal must be a unit vector")


@dataclass(frozen=True)
class FrictionParams:
    """Regularized Coulomb friction at contact-active nodes.

    Variants of the velocity regularization f_frc(x), x = |v_t| / eps_v:

    - "smooth_quadratic":  1 for x >= 1, else -x^2 + 2x.  The published
      quadratic -x^2 + x is discontinuous at x = 1; the corrected form is
      the default and the original is available with paper_exact=True.
    - "smoothstep_cubic":  3x^2 - 2x^3 on [0, 1], then 1.
    - "unidirectional_cubic": cubic law applied only when the tangential
      velocity opposes ``forward``; motion along ``forward`` is free.
    """

    mu: float
    eps_v: float
    variant: str = "smooth_quadratic"
    forward: Optional[np.ndarray] = None
    paper_exact: bool = False

    def __post_init__(self):
        if self.mu < 0 or self.eps_v <= 0:
            raise ValueError("mu must be >= 0 and eps_v > 0")
        if self.variant not in ("smooth_quadratic", "smoothstep_cubic",
                                "unidirectional_cubic"):
            raise ValueError(f"unknown friction variant {self.variant!r}")
        if self.variant == "unidirectional_cubic" and self.forward is None:
            raise ValueError("unidirectional friction needs a forward axis")


@dataclass
class MagnetSpec:
    """Hard-magnet faces in a uniform external field.

    ``faces`` lists magnetized triangles; ``b_mat`` holds each face's
    remanent flux density in its material frame (edge-aligned tangent,
    in-plane normal x tangent, face normal), transported by the face
    rotation.  ``field`` maps time to the external 3-vector.  ``sign``
    selects the potential convention: +1 for Psi = +(B_r . B_ext) A,
    -1 for the alignment-seeking -m.B form.
    """

    faces: np.ndarray
    b_mat: np.ndarray
    field: Callable[[float], np.ndarray]
    sign: float = 1.0


def gravity_force(mass, g, n_vertices):
    """Nodal gravity m_a g on every vertex; the last N2 slots stay zero.

    ``mass`` is the lumped mass vector over all 3 N1 + N2 DOFs (the three
    axis copies per vertex are equal by construction).
    """
    mass = np.asarray(mass, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    out = np.zeros_like(mass)
    out[:3 * n_vertices] = mass[:3 * n_vertices] * np.tile(g, n_vertices)
    return out


def contact_potential(d, params):
    """Barrier value, first, and second derivative at gap distance d."""
    k = params.stiffness
    dt = params.d_tilde
    d = np.asarray(d, dtype=np.float64)
    active = d <= dt
    out = np.zeros(d.shape)
    dp = np.zeros(d.shape)
    dpp = np.zeros(d.shape)
    if np.any(active):
        da = d[active]
        diff = da - dt
        ln = np.log(dt / da)
        out[active] = k * diff * diff * ln
        dp[active] = k * (2.0 * diff * ln - diff * diff / da)
        dpp[active] = k * (2.0 * ln - 4.0 * diff / da + diff * diff / (da * da))
    return out, dp, dpp


def contact_force(positions, velocities, params, n_total=None):
    """Plane contact over all vertices.

    Returns (force (N1,3), tangent triplets, potential, active mask,
    normal magnitudes N per vertex).  Raises PenetrationUnderflow when a
    node comes within 1e-6 d_tilde of the plane.
    """
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = np.asarray(params.normal, dtype=np.float64)
    d = (p - np.asarray(params.point)) @ n
    if np.any(d <= _PEN_FLOOR * params.d_tilde):
        raise PenetrationUnderflow(
            f"node at gap {d.min():.3e} below floor "
            f"{_PEN_FLOOR * params.d_tilde:.3e}")
    psi, dpsi, ddpsi = contact_potential(d, params)
    f = -dpsi[:, None] * n[None, :]
    active = d <= params.d_tilde

    rows, cols, vals = [], [], []
    idx = np.nonzero(active)[0]
    nn = np.outer(n, n)
    for a in idx:
        base = 3 * a
        blk = -ddpsi[a] * nn          # df/dq block
        for i in range(3):
            for j in range(3):
                rows.append(base + i)
                cols.append(base + j)
                vals.append(blk[i, j])
    return f, (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
               np.array(vals)), float(psi.sum()), active, -dpsi


def f_frc(x, params):
    """Velocity regularization profile on normalized speed x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    if params.variant == "smooth_quadratic" and params.paper_exact:
        return np.where(x >= 1.0, 1.0, -x * x + x)
    if params.variant == "smooth_quadratic":
        return np.where(x >= 1.0, 1.0, -x * x + 2.0 * x)
    # cubic smoothstep for both cubic variants
    xc = np.clip(x, 0.0, 1.0)
    return np.where(x >= 1.0, 1.0, 3.0 * xc * xc - 2.0 * xc ** 3)


def d_f_frc(x, params):
    x = np.asarray(x, dtype=np.float64)
    if params.variant == "smooth_quadratic" and params.paper_exact:
        return np.where(x >= 1.0, 0.0, -2.0 * x + 1.0)
    if params.variant == "smooth_quadratic":
        return np.where(x >= 1.0, 0.0, -2.0 * x + 2.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(x >= 1.0, 0.0, 6.0 * xc - 6.0 * xc * xc)


def friction_force(positions, velocities, normal_mags, params, active,
                   plane_normal):
    """Regularized Coulomb friction on contact-active vertices.

    ``normal_mags`` holds |f_contact_N| per vertex; friction acts on the
    velocity component tangential to the plane and never exceeds mu N.
    Returns (force (N1,3), velocity-tangent triplets).
    """
    v = np.asarray(velocities, dtype=np.float64).reshape(-1, 3)
    n = np.asarray(plane_normal, dtype=np.float64)
    vt = v - np.outer(v @ n, n)
    speed = np.linalg.norm(vt, axis=1)
    f = np.zeros_like(vt)
    rows, cols, vals = [], [], []
    idx = np.nonzero(active & (normal_mags > 0))[0]
    for a in idx:
        s = speed[a]
        if s < 1e-14:
            continue
        vhat = vt[a] / s
        x = s / params.eps_v
        if params.variant == "unidirectional_cubic":
            fwd = np.asarray(params.forward, dtype=np.float64)
            if np.dot(vt[a], fwd) >= 0.0:
                continue  # free direction
        mag = params.mu * normal_mags[a] * f_frc(x, params)
        f[a] = -mag * vhat
        # velocity tangent with frozen direction: df/dv = -mu N f'/eps vhat vhat^T
        coef = -params.mu * normal_mags[a] * d_f_frc(x, params) / params.eps_v
        blk = coef * np.outer(vhat, vhat)
        base = 3 * a
        for i in range(3):
            for j in range(3):
                rows.append(base + i)
                cols.append(base + j)
                vals.append(blk[i, j])
    return f, (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
               np.array(vals))


def face_frame(p0, p1, p2):
    """Orthonormal face frame columns (t1, t2, n) and area.

    t1 follows the first edge, n the CCW normal, t2 = n x t1.
    """
    d1 = p1 - p0
    d2 = p2 - p0
    c = np.cross(d1, d2)
    cn = np.linalg.norm(c, axis=-1)
    t1 = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
    nrm = c / cn[..., None]
    t2 = np.cross(nrm, t1)
    return t1, t2, nrm, 0.5 * cn


def magnetic_force(mesh, positions, spec, t):
    """Magnetic potential, force, and position-tangent triplets.

    Psi = sign * sum_faces (R(q) b_mat . B_ext(t)) * A(q).  The force is
    the exact negative gradient; the tangent is a symmetrized forward
    difference of that force per face.
    """
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(spec.field(t), dtype=np.float64)
    faces = np.asarray(spec.faces, dtype=np.int64)
    f_out = np.zeros_like(p)
    psi_total = 0.0
    rows, cols, vals = [], [], []
    if faces.size == 0 or not np.any(B):
        empty = (np.zeros(0, dtype=np.int64),) * 2 + (np.zeros(0),)
        return 0.0, f_out, empty

    tris = mesh.triangles[faces]
    scale = mesh.bbox_scale() or 1.0
    h = 1e-7 * scale
    for fi, tvert in enumerate(tris):
        b = np.asarray(spec.b_mat[fi], dtype=np.float64)
        pts = p[tvert]
        psi, grad = _magnet_elem(pts, b, B, spec.sign)
        psi_total += psi
        f_out[tvert] -= grad
        # face tangent: forward difference of the force (= -grad)
        K = np.empty((9, 9))
        g0 = grad.ravel()
        for m in range(9):
            q = pts.copy()
            q[m // 3, m % 3] += h
            _, gp = _magnet_elem(q, b, B, spec.sign)
            K[:, m] = -(gp.ravel() - g0) / h
        K = 0.5 * (K + K.T)
        dofs = (3 * tvert[:, None] + np.arange(3)[None, :]).ravel()
        for i in range(9):
            for j in range(9):
                rows.append(dofs[i])
                cols.append(dofs[j])
                vals.append(K[i, j])
    return psi_total, f_out, (np.array(rows, dtype=np.int64),
                              np.array(cols, dtype=np.int64), np.array(vals))


def _magnet_elem(pts, b, B, sign):
    """Potential and d(Psi)/d(vertices) for one magnetized face."""
    p0, p1, p2 = pts
    d1 = p1 - p0
    d2 = p2 - p0
    c = np.cross(d1, d2)
    cn = np.linalg.norm(c)
    if cn < 1e-14:
        raise DegenerateFace("magnetized face has near-zero area")
    nrm = c / cn
    d1n = np.linalg.norm(d1)
    t1 = d1 / d1n
    t2 = np.cross(nrm, t1)
    A = 0.5 * cn
    m = np.array([np.dot(t1, B), np.dot(t2, B), np.dot(nrm, B)])
    psi = sign * A * np.dot(b, m)

    Pn = np.eye(3) - np.outer(nrm, nrm)
    Pt = np.eye(3) - np.outer(t1, t1)
    y_c = sign * (np.dot(b, m) * 0.5 * nrm
                  + A * b[2] * (Pn @ B) / cn
                  + A * b[1] * (Pn @ np.cross(t1, B)) / cn)
    y_d1 = sign * (A * b[0] * (Pt @ B) / d1n
                   + A * b[1] * (Pt @ np.cross(B, nrm)) / d1n)
    gd1 = np.cross(d2, y_c) + y_d1
    gd2 = np.cross(y_c, d1)
    grad = np.empty((3, 3))
    grad[1] = gd1
    grad[2] = gd2
    grad[0] = -(gd1 + gd2)
    return psi, grad


class PointForceTable:
    """Piecewise-linear applied force schedule on a node set."""

    def __init__(self, nodes, times, forces):
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.times = np.asarray(times, dtype=np.float64)
        self.forces = np.asarray(forces, dtype=np.float64).reshape(len(times), 3)

    def __call__(self, t):
        out = np.empty(3)
        for ax in range(3):
            out[ax] = np.interp(t, self.times, self.forces[:, ax])
        return out


@dataclass
class LoadSet:
    """Everything on the right-hand side of the equations of motion."""

    mass: np.ndarray
    n_vertices: int
    gravity: Optional[np.ndarray] = None          # acceleration 3-vector
    contact: Optional[ContactParams] = None
    friction: Optional[FrictionParams] = None
    magnets: Optional[MagnetSpec] = None
    point_forces: Sequence[PointForceTable] = ()
    mesh: object = None

    def assemble(self, q, v, t):
        """f_ext plus tangent triplets and the conservative load potential.

        Returns (f (n,), jq triplets, jv triplets, potential).
        """
        n = q.shape[0]
        n1 = self.n_vertices
        f = np.zeros(n)
        jq = [np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
              np.zeros(0)]
        jv = [np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
              np.zeros(0)]
        pot = 0.0
        pos = q[:3 * n1].reshape(n1, 3)
        vel = v[:3 * n1].reshape(n1, 3)

        if self.gravity is not None and np.any(self.gravity):
            fg = self.mass[:3 * n1] * np.tile(self.gravity, n1)
            f[:3 * n1] += fg
            pot += -float(fg @ q[:3 * n1])

        active = None
        nmag = None
        if self.contact is not None:
            fc, trip, psi, active, nmag = contact_force(pos, vel, self.contact)
            f[:3 * n1] += fc.ravel()
            _extend(jq, trip)
            pot += psi

        if self.friction is not None and active is not None:
            ff, trip = friction_force(pos, vel, nmag, self.friction, active,
                                      self.contact.normal)
            f[:3 * n1] += ff.ravel()
            _extend(jv, trip)

        if self.magnets is not None:
            psi, fm, trip = magnetic_force(self.mesh, pos, self.magnets, t)
            f[:3 * n1] += fm.ravel()
            _extend(jq, trip)
            pot += psi

        for table in self.point_forces:
            fv = table(t)
            for a in table.nodes:
                f[3 * a:3 * a + 3] += fv
                pot -= float(fv @ pos[a])

        return f, tuple(jq), tuple(jv), pot


def _extend(acc, trip):
    acc[0] = np.concatenate([acc[0], trip[0]])
    acc[1] = np.concatenate([acc[1], trip[1]])
    acc[2] = np.concatenate([acc[2], trip[2]])
