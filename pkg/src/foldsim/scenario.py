"""Scenario files: parsing, model assembly, execution, and outputs.

A scenario is one JSON document naming a pattern recipe, materials,
crease stiffnesses (directly or through the dimensionless ratio
eta = K_r W / (E h^3)), boundary/load schedules, solver settings, and
probes.  ``run_scenario`` executes the quasi-static or dynamic pipeline
and writes ``trace.csv``, ``final.obj`` + ``final.creases.json``, and
``summary.json``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import patterns
from .energy import ElasticModel, MaterialParams
from .errors import (
    NewtonDiverged,
    PenetrationUnderflow,
    SchemaError,
    ScheduleGap,
    SnapDetected,
    SolverError,
    UnknownGenerator,
)
from .forces import (
    ContactParams,
    FrictionParams,
    LoadSet,
    MagnetSpec,
    PointForceTable,
    face_frame,
)
from .mesh import export_crease_sidecar, export_obj, lumped_mass
from .solver import (
    FREE,
    BoundarySpec,
    SolverConfig,
    SystemState,
    dynamic_run,
    implicit_euler_step,
    mechanical_energy,
    quasi_static_solve,
)

GENERATORS = {
    "single_fold": patterns.gen_single_fold,
    "miura": patterns.gen_miura,
    "waterbomb": patterns.gen_waterbomb,
    "kresling": patterns.gen_kresling,
}

_MODES = ("dynamic", "quasistatic")


@dataclass
class Scenario:
    """Validated scenario configuration (raw dict plus checked fields)."""

    name: str
    raw: dict
    path: str = ""

    @property
    def mode(self):
        return self.raw["mode"]

    @property
    def duration(self):
        return float(self.raw["duration"])


def _check_table(problems, path, table, t_final=None, width=2):
    if not isinstance(table, list) or not table or any(
            not isinstance(r, list) or len(r) != width for r in table):
        problems.append(f"{path}: expected a list of [t, value...] rows")
        return
    times = [r[0] for r in table]
    if any(b < a for a, b in zip(times, times[1:])):
        problems.append(f"{path}: times must be non-decreasing")
    if t_final is not None and times[-1] < t_final - 1e-12:
        problems.append(
            f"{path}: schedule ends at {times[-1]} before duration {t_final}"
            " [schedule-gap]")


def parse_scenario(source):
    """Parse and validate a scenario file or dict.

    Collects every problem instead of stopping at the first; raises
    UnknownGenerator / ScheduleGap when that is the only kind of problem,
    SchemaError otherwise.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as f:
            raw = json.load(f)
        path = str(source)
    else:
        raw = dict(source)
        path = "<dict>"

    problems = []
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        problems.append("name: required string")
        name = "unnamed"

    mode = raw.get("mode", "dynamic")
    raw["mode"] = mode
    if mode not in _MODES:
        problems.append(f"mode: must be one of {_MODES}")

    duration = raw.get("duration")
    if not isinstance(duration, (int, float)) or duration <= 0:
        problems.append("duration: required positive number")
        duration = None

    pattern = raw.get("pattern")
    if not isinstance(pattern, dict) or "generator" not in pattern:
        problems.append("pattern.generator: required")
    else:
        gen = pattern["generator"]
        if gen not in GENERATORS:
            problems.append(
                f"pattern.generator: unknown generator {gen!r}"
                " [unknown-generator]")

    mats = raw.get("materials")
    if not isinstance(mats, dict) or "default" not in mats:
        problems.append('materials.default: required {E, nu, h, rho}')
    else:
        for gname, m in mats.items():
            for key in ("E", "nu", "h"):
                if key not in m:
                    problems.append(f"materials.{gname}.{key}: required")

    for i, bcent in enumerate(raw.get("boundary", [])):
        p = f"boundary[{i}]"
        kind = bcent.get("type")
        if kind not in ("fixed", "prescribed", "rotate", "pull_to"):
            problems.append(f"{p}.type: unknown type {kind!r}")
            continue
        if "nodes" not in bcent:
            problems.append(f"{p}.nodes: required")
        if kind == "prescribed":
            if bcent.get("axis") not in ("x", "y", "z"):
                problems.append(f"{p}.axis: required one of x|y|z")
            _check_table(problems, f"{p}.table", bcent.get("table"),
                         duration)
        if kind == "rotate":
            _check_table(problems, f"{p}.angle_table",
                         bcent.get("angle_table"), duration)
        if kind == "fixed" and not bcent.get("axes"):
            problems.append(f"{p}.axes: required subset of 'xyz'")

    loads = raw.get("loads", {})
    if "magnets" in loads:
        _check_table(problems, "loads.magnets.field_table",
                     loads["magnets"].get("field_table"), duration)
    for i, pf in enumerate(loads.get("point_forces", [])):
        _check_table(problems, f"loads.point_forces[{i}].table",
                     pf.get("table"), duration, width=4)

    if problems:
        if all(p.endswith("[unknown-generator]") for p in problems):
            raise UnknownGenerator("; ".join(problems))
        if all(p.endswith("[schedule-gap]") for p in problems):
            raise ScheduleGap("; ".join(problems))
        raise SchemaError(problems)
    return Scenario(name=name, raw=raw, path=path)


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

@dataclass
class BuiltScenario:
    scenario: Scenario
    mesh: object
    creases: object
    model: ElasticModel
    loads: LoadSet
    bc: BoundarySpec
    cfg: SolverConfig
    probes: list
    q0: np.ndarray
    on_snap: str
    settle: dict
    pre_settle: dict | None
    record_every: int


def _nodes(mesh, spec):
    if isinstance(spec, str):
        return np.asarray(mesh.vertex_groups[spec], dtype=np.int64)
    return np.asarray(spec, dtype=np.int64)


def _resolve_targets(mesh, nodes, spec):
    """Target positions for pull-style loading.

    "miura_deployed" maps the given nodes to their positions in the nearly
    flat rigid-folding state of the generated Miura pattern (the rays are
    fixed at build, matching displacement directions computed at t = 0).
    """
    if isinstance(spec, str):
        if spec != "miura_deployed":
            raise SchemaError([f"targets: unknown keyword {spec!r}"])
        meta = mesh.pattern_meta
        P = patterns.miura_vertices(meta["m"], meta["n"], meta["a"],
                                    meta["b"], meta["gamma"],
                                    1e-3).reshape(-1, 3)
        return P[nodes]
    return np.asarray(spec, dtype=np.float64)


def _axis_index(ax):
    return "xyz".index(ax)


def build_scenario(sc, seed=0):
    raw = sc.raw
    pat = dict(raw["pattern"])
    gen_name = pat["generator"]
    params = dict(pat.get("params", {}))

    # crease stiffness through eta when requested
    creff = raw.get("creases", {})
    mats_raw = raw["materials"]
    default_mat = MaterialParams(**{k: float(v)
                                    for k, v in mats_raw["default"].items()})
    if "eta" in creff and creff["eta"] is not None:
        W = float(creff.get("W_char") or params.get("panel_len")
                  or params.get("b") or params.get("size")
                  or params.get("radius") or 1.0)
        k_r = float(creff["eta"]) * default_mat.E * default_mat.h ** 3 / W
        for key in ("k_r", "k_r_valley", "k_r_mountain", "k_r_ring"):
            if key in _gen_kwargs(gen_name):
                params.setdefault(key, k_r)
    for key, val in creff.get("k_r", {}).items() \
            if isinstance(creff.get("k_r"), dict) else []:
        params.setdefault(key, float(val))

    mesh, creases = GENERATORS[gen_name](**params)

    rest_override = creff.get("rest_angle_scale")
    if rest_override is not None:
        creases = replace(creases,
                          rest_angle=creases.rest_angle * float(rest_override))

    materials = {g: MaterialParams(**{k: float(v) for k, v in m.items()})
                 for g, m in mats_raw.items()}
    if len(materials) == 1:
        materials = materials["default"]

    model = ElasticModel(mesh, creases, materials)
    mass = lumped_mass(
        mesh, creases,
        model.rho_tri * model.h_tri,
        crease_inertia=raw.get("solver", {}).get("crease_inertia"))

    loads = _build_loads(raw.get("loads", {}), mesh, model, mass)
    cfg = _build_cfg(raw.get("solver", {}))

    q0 = model.rest_state()
    init = raw.get("initial", {})
    if "translate" in init:
        pos, ang = model.dof.split(q0)
        pos += np.asarray(init["translate"], dtype=np.float64)
        q0 = model.dof.join(pos, ang)
    pert = raw.get("perturbation")
    if pert:
        nodes = _nodes(mesh, pert["nodes"])
        ax = _axis_index(pert.get("axis", "z"))
        mag = float(pert["magnitude"]) * (mesh.bbox_scale() or 1.0)
        for nd in nodes:
            q0[model.dof.vertex_dof(int(nd), ax)] += mag

    bc = _build_boundary(raw.get("boundary", []), mesh, model, q0, sc, cfg)

    probes = _build_probes(raw.get("probes", []), mesh, model, q0)

    return BuiltScenario(
        scenario=sc, mesh=mesh, creases=creases, model=model, loads=loads,
        bc=bc, cfg=cfg, probes=probes, q0=q0,
        on_snap=raw.get("on_snap", "stop"),
        settle=raw.get("settle", {"time": 1.0, "alpha_damp": 20.0,
                                  "dt": cfg.dt}),
        pre_settle=raw.get("pre_settle"),
        record_every=int(raw.get("record_every", 1)))


def _gen_kwargs(gen_name):
    import inspect
    return inspect.signature(GENERATORS[gen_name]).parameters


def _build_cfg(s):
    return SolverConfig(
        dt=float(s.get("dt", 1e-2)),
        alpha_damp=float(s.get("alpha_damp", 0.0)),
        newton_tol=float(s.get("newton_tol", 1e-8)),
        max_newton=int(s.get("max_newton", 40)),
        max_backtracks=int(s.get("max_backtracks", 25)),
        dt_min=float(s.get("dt_min", 1e-7)),
        qs_min_step=float(s.get("qs_min_step", 1e-4)),
    )


def _build_loads(cfgl, mesh, model, mass):
    loads = LoadSet(mass=mass, n_vertices=mesh.n_vertices, mesh=mesh)
    if "gravity" in cfgl:
        loads.gravity = np.asarray(cfgl["gravity"], dtype=np.float64)
    if "contact" in cfgl:
        c = cfgl["contact"]
        loads.contact = ContactParams(
            stiffness=float(c["stiffness"]), d_tilde=float(c["d_tilde"]),
            point=np.asarray(c.get("point", [0, 0, 0]), dtype=np.float64),
            normal=np.asarray(c.get("normal", [0, 0, 1]),
                              dtype=np.float64))
    if "friction" in cfgl:
        f = cfgl["friction"]
        loads.friction = FrictionParams(
            mu=float(f["mu"]), eps_v=float(f["eps_v"]),
            variant=f.get("variant", "smooth_quadratic"),
            forward=(np.asarray(f["forward"], dtype=np.float64)
                     if "forward" in f else None),
            paper_exact=bool(f.get("paper_exact", False)))
    if "magnets" in cfgl:
        m = cfgl["magnets"]
        axis = np.asarray(m.get("field_axis", [0, 1, 0]), dtype=np.float64)
        table = m["field_table"]
        times = np.array([r[0] for r in table])
        mags = np.array([r[1] for r in table])

        def field(t, axis=axis, times=times, mags=mags):
            return np.interp(t, times, mags) * axis

        faces = []
        b_mat = []
        for plate in m["plates"]:
            fs = mesh.face_groups[plate["faces"]] if isinstance(
                plate["faces"], str) else np.asarray(plate["faces"])
            M = np.asarray(plate["moment"], dtype=np.float64)
            for fi in fs:
                p0, p1, p2 = mesh.vertices[mesh.triangles[fi]]
                t1, t2, nrm, _ = face_frame(p0, p1, p2)
                faces.append(int(fi))
                b_mat.append([t1 @ M, t2 @ M, nrm @ M])
        loads.magnets = MagnetSpec(
            faces=np.asarray(faces, dtype=np.int64),
            b_mat=np.asarray(b_mat), field=field,
            sign=float(m.get("sign", 1.0)))
    tables = []
    for pf in cfgl.get("point_forces", []):
        nodes = _nodes(mesh, pf["nodes"])
        rows = pf["table"]
        times = [r[0] for r in rows]
        if "direction_to" in pf:
            # per-node pull toward target positions, magnitudes from the
            # table (one PointForceTable per node); rays fixed at build
            targets = _resolve_targets(mesh, nodes, pf["direction_to"])
            mags = np.array([r[1] for r in rows])
            for nd, tgt in zip(nodes, targets):
                d = tgt - mesh.vertices[nd]
                d /= np.linalg.norm(d)
                tables.append(PointForceTable(
                    [nd], times, np.outer(mags, d)))
        else:
            forces = [r[1:4] for r in rows]
            tables.append(PointForceTable(nodes, times, np.asarray(forces)))
    loads.point_forces = tables
    return loads


def _build_boundary(entries, mesh, model, q0, sc, cfg):
    bc = BoundarySpec(model.dof.total)
    duration = sc.duration
    for ent in entries:
        nodes = _nodes(mesh, ent["nodes"])
        kind = ent["type"]
        if kind == "fixed":
            dofs = [model.dof.vertex_dof(int(n), _axis_index(a))
                    for n in nodes for a in ent["axes"]]
            bc.fix(dofs)
        elif kind == "prescribed":
            ax = _axis_index(ent["axis"])
            rows = ent["table"]
            times = [r[0] for r in rows]
            vals = np.array([r[1] for r in rows], dtype=np.float64)
            relative = bool(ent.get("relative", True))
            for n in nodes:
                dof = model.dof.vertex_dof(int(n), ax)
                base = q0[dof] if relative else 0.0
                bc.prescribe(dof, times, base + vals)
        elif kind == "rotate":
            axis = ent.get("axis", "z")
            center = np.asarray(ent.get("center", [0.0, 0.0, 0.0]))
            rows = ent["angle_table"]
            tt = np.array([r[0] for r in rows])
            aa = np.array([r[1] for r in rows])
            ts = np.linspace(0.0, duration, max(200, 8 * int(
                duration / cfg.dt) if cfg.dt else 200) + 1)
            ang = np.interp(ts, tt, aa)
            i_ax = _axis_index(axis)
            j_ax, k_ax = [(1, 2), (2, 0), (0, 1)][i_ax]
            for n in nodes:
                p = q0[model.dof.vertex_slice(int(n))] - center
                r = np.hypot(p[j_ax], p[k_ax])
                th0 = np.arctan2(p[k_ax], p[j_ax])
                bc.prescribe(model.dof.vertex_dof(int(n), j_ax), ts,
                             center[j_ax] + r * np.cos(th0 + ang))
                bc.prescribe(model.dof.vertex_dof(int(n), k_ax), ts,
                             center[k_ax] + r * np.sin(th0 + ang))
        elif kind == "pull_to":
            # constant-speed displacement toward target positions; the ray
            # is fixed at t = 0
            targets = _resolve_targets(mesh, nodes, ent["targets"])
            speed = float(ent["speed"])
            frac_stop = float(ent.get("fraction", 1.0))
            for n, tgt in zip(nodes, targets):
                p0 = q0[model.dof.vertex_slice(int(n))]
                d = tgt - p0
                dist = np.linalg.norm(d)
                d /= dist
                travel = frac_stop * dist
                t_arrive = travel / speed
                ts = [0.0, min(t_arrive, duration), duration]
                ss = [0.0, speed * ts[1], travel]
                for ax in range(3):
                    vals = p0[ax] + np.array(ss) * d[ax]
                    bc.prescribe(model.dof.vertex_dof(int(n), ax), ts, vals)
    bc.check_coverage(duration)
    return bc


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

class _Probe:
    columns: list

    def record(self, built, state, report):
        raise NotImplementedError


class _FoldAngleProbe(_Probe):
    def __init__(self, name, model, creases, group, interior,
                 absolute=False):
        self.segs = (creases.groups[group] if group else
                     np.arange(creases.n_segments))
        self.model = model
        self.interior = interior
        self.absolute = absolute
        self.columns = [f"{name}_phi", f"{name}_phiv"]
        if interior:
            self.columns.append(f"{name}_int")

    def record(self, built, state, report):
        from .analysis import fold_angle_means, interior_angle
        phi, phiv = fold_angle_means(self.model, state.q, self.segs,
                                     absolute=self.absolute)
        out = [phi, phiv]
        if self.interior:
            out.append(interior_angle(phi))
        return out


class _ReactionProbe(_Probe):
    def __init__(self, name, model, mesh, nodes, axes):
        self.dofs = {a: [model.dof.vertex_dof(int(n), _axis_index(a))
                         for n in _nodes(mesh, nodes)] for a in axes}
        self.columns = [f"{name}_{a}" for a in axes]

    def record(self, built, state, report):
        return [float(report.reactions[d].sum()) if report is not None
                else 0.0 for d in self.dofs.values()]


class _TorqueProbe(_Probe):
    def __init__(self, name, model, mesh, nodes, axis, center):
        self.nodes = _nodes(mesh, nodes)
        self.model = model
        self.axis = _axis_index(axis)
        self.center = np.asarray(center, dtype=np.float64)
        self.columns = [name]

    def record(self, built, state, report):
        if report is None:
            return [0.0]
        i = self.axis
        j, k = [(1, 2), (2, 0), (0, 1)][i]
        total = 0.0
        for n in self.nodes:
            sl = self.model.dof.vertex_slice(int(n))
            r = state.q[sl] - self.center
            f = report.reactions[sl]
            total += r[j] * f[k] - r[k] * f[j]
        return [float(total)]


class _NodePosProbe(_Probe):
    def __init__(self, name, model, mesh, nodes, axis, relative, q0):
        self.nodes = _nodes(mesh, nodes)
        self.model = model
        self.axis = _axis_index(axis)
        self.base = (np.array([q0[model.dof.vertex_dof(int(n), self.axis)]
                               for n in self.nodes])
                     if relative else np.zeros(len(self.nodes)))
        if len(self.nodes) == 1:
            self.columns = [name]
        else:
            self.columns = [f"{name}_{i}" for i in range(len(self.nodes))]

    def record(self, built, state, report):
        vals = [state.q[self.model.dof.vertex_dof(int(n), self.axis)]
                for n in self.nodes]
        return [float(v - b) for v, b in zip(vals, self.base)]


class _MeanPosProbe(_Probe):
    def __init__(self, name, model, mesh, nodes, axis, relative, q0):
        self.nodes = _nodes(mesh, nodes)
        self.model = model
        self.axis = _axis_index(axis)
        vals0 = [q0[model.dof.vertex_dof(int(n), self.axis)]
                 for n in self.nodes]
        self.base = float(np.mean(vals0)) if relative else 0.0
        self.columns = [name]

    def record(self, built, state, report):
        vals = [state.q[self.model.dof.vertex_dof(int(n), self.axis)]
                for n in self.nodes]
        return [float(np.mean(vals) - self.base)]


class _EnergyProbe(_Probe):
    def __init__(self, model, loads):
        self.model = model
        self.loads = loads
        self.columns = ["E_stretch", "E_bend", "E_rotation", "E_kinetic",
                        "E_potential_ext", "E_total"]

    def record(self, built, state, report):
        br = self.model.energy_breakdown(state.q)
        kin = 0.5 * float(np.sum(self.loads.mass * state.qdot ** 2))
        _, _, _, pot = self.loads.assemble(state.q, state.qdot, state.t)
        return [br.stretch, br.bend, br.rotation, kin, pot,
                br.total + kin + pot]


class _CurvatureRatioProbe(_Probe):
    def __init__(self, name, model, mesh, skip_ends=False):
        self.model = model
        lines = mesh.probe_lines
        if skip_ends:
            lines = {"L": lines["L"][1:-1], "W": lines["W"]}
        self.lines = lines
        self.columns = [name]

    def record(self, built, state, report):
        from .analysis import probe_curvature_ratio
        pos, _ = self.model.dof.split(state.q)
        try:
            return [float(probe_curvature_ratio([pos], self.lines)[0])]
        except Exception:
            return [float("nan")]


class _FlatnessProbe(_Probe):
    def __init__(self, name, model):
        self.model = model
        self.columns = [name]

    def record(self, built, state, report):
        from .analysis import flatness_map
        pos, _ = self.model.dof.split(state.q)
        return [float(np.abs(flatness_map(pos)).max())]


class _HeightDiffProbe(_Probe):
    def __init__(self, name, model, mesh, a, b, axis):
        self.model = model
        self.na = _nodes(mesh, a)
        self.nb = _nodes(mesh, b)
        self.axis = _axis_index(axis)
        self.columns = [name]

    def record(self, built, state, report):
        za = np.mean([state.q[self.model.dof.vertex_dof(int(n), self.axis)]
                      for n in self.na])
        zb = np.mean([state.q[self.model.dof.vertex_dof(int(n), self.axis)]
                      for n in self.nb])
        return [float(za - zb)]


def _build_probes(entries, mesh, model, q0):
    probes = []
    for ent in entries:
        kind = ent["kind"]
        name = ent.get("name", kind)
        if kind == "fold_angle":
            probes.append(_FoldAngleProbe(name, model, model.creases,
                                          ent.get("group"),
                                          bool(ent.get("interior", False)),
                                          bool(ent.get("absolute", False))))
        elif kind == "reaction":
            probes.append(_ReactionProbe(name, model, mesh, ent["nodes"],
                                         ent.get("axes", "z")))
        elif kind == "torque":
            probes.append(_TorqueProbe(name, model, mesh, ent["nodes"],
                                       ent.get("axis", "z"),
                                       ent.get("center", [0, 0, 0])))
        elif kind == "node_pos":
            probes.append(_NodePosProbe(name, model, mesh, ent["nodes"],
                                        ent.get("axis", "z"),
                                        bool(ent.get("relative", False)),
                                        q0))
        elif kind == "mean_pos":
            probes.append(_MeanPosProbe(name, model, mesh, ent["nodes"],
                                        ent.get("axis", "z"),
                                        bool(ent.get("relative", False)),
                                        q0))
        elif kind == "energy":
            probes.append(None)  # placeholder resolved in run (needs loads)
        elif kind == "curvature_ratio":
            probes.append(_CurvatureRatioProbe(
                name, model, mesh, bool(ent.get("skip_ends", False))))
        elif kind == "flatness":
            probes.append(_FlatnessProbe(name, model))
        elif kind == "height_diff":
            probes.append(_HeightDiffProbe(name, model, mesh, ent["a"],
                                           ent["b"], ent.get("axis", "z")))
        else:
            raise SchemaError([f"probes: unknown kind {kind!r}"])
    return probes


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def run_scenario(sc, out_dir=None, seed=0, max_steps=None, sequential=True):
    """Execute a parsed scenario; returns (summary dict, records list).

    Writes trace.csv, final.obj, final.creases.json, and summary.json when
    ``out_dir`` is given.  ``sequential`` is accepted for interface
    stability; execution is always deterministic and single-threaded.
    """
    t_wall = time.perf_counter()
    built = build_scenario(sc, seed=seed)
    for i, p in enumerate(built.probes):
        if p is None:
            built.probes[i] = _EnergyProbe(built.model, built.loads)

    records = []
    snap_events = []
    status = "ok"
    err_msg = ""

    def record(state, report):
        row = {"t": state.t}
        for p in built.probes:
            for cname, val in zip(p.columns, p.record(built, state, report)):
                row[cname] = val
        records.append(row)

    state = SystemState(q=built.q0.copy(),
                        qdot=np.zeros(built.model.dof.total), t=0.0)
    try:
        if built.pre_settle:
            ps = built.pre_settle
            cfg = replace(built.cfg,
                          alpha_damp=float(ps.get("alpha_damp",
                                                  built.cfg.alpha_damp)),
                          dt=float(ps.get("dt", built.cfg.dt)))
            hold = BoundarySpec(built.model.dof.total)
            hold.kind[:] = built.bc.kind
            if ps.get("hold_prescribed", True):
                for dof, tab in built.bc.tables.items():
                    hold.prescribe(dof, [0.0, float(ps["duration"])],
                                   [tab(0.0)] * 2)
            else:
                hold.kind[np.fromiter(built.bc.tables.keys(), dtype=np.int64)
                          ] = FREE
            for gname in ps.get("free_fixed_groups", []):
                for nd in built.mesh.vertex_groups[gname]:
                    for ax in range(3):
                        hold.kind[built.model.dof.vertex_dof(int(nd),
                                                             ax)] = FREE
            state = dynamic_run(state, built.model, built.loads, hold, cfg,
                                float(ps["duration"]))
            state = SystemState(q=state.q, qdot=np.zeros_like(state.qdot),
                                t=0.0)
            # re-anchor relative prescribed tables at the settled state
            built.bc = _build_boundary(sc.raw.get("boundary", []),
                                       built.mesh, built.model, state.q,
                                       sc, built.cfg)

        if sc.mode == "dynamic":
            counter = {"n": 0}

            def on_step(s, r):
                counter["n"] += 1
                if counter["n"] % built.record_every == 0:
                    record(s, r)

            record(state, None)
            state = dynamic_run(state, built.model, built.loads, built.bc,
                                built.cfg, sc.duration, on_step=on_step,
                                max_steps=max_steps)
            if raw_solver(sc).get("polish"):
                # settle the final configuration to a static equilibrium
                try:
                    res = quasi_static_solve(
                        built.model, built.loads, built.bc,
                        replace(built.cfg, max_newton=200),
                        [state.t], state0=state)
                    state = res[-1][1]
                    if records:
                        records.pop()
                    record(state, res[-1][2])
                except (SnapDetected, NewtonDiverged):
                    pass  # keep the dynamic end state
        else:
            state = _run_quasistatic(built, sc, state, record, snap_events,
                                     max_steps)
    except (SolverError, PenetrationUnderflow) as exc:
        status = "solver-failure"
        err_msg = f"{type(exc).__name__}: {exc}"

    summary = {
        "name": sc.name,
        "status": status,
        "error": err_msg,
        "seed": seed,
        "snap_events": snap_events,
        "n_records": len(records),
        "final_time": state.t,
        "final_energy": _energy_dict(built, state),
        "peaks": _peaks(records),
        "wall_time_s": time.perf_counter() - t_wall,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "trace.csv", records)
        pos, _ = built.model.dof.split(state.q)
        export_obj(built.mesh, pos, out / "final.obj")
        export_crease_sidecar(built.mesh, built.creases,
                              out / "final.creases.json")
        with open(out / "summary.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=1)
    return summary, records, state


def raw_solver(sc):
    return sc.raw.get("solver", {})


def _run_quasistatic(built, sc, state, record, snap_events, max_steps):
    n_steps = int(built.scenario.raw.get("solver", {}).get("qs_steps", 50))
    if max_steps is not None:
        n_steps = min(n_steps, max_steps)
    load_times = list(np.linspace(0.0, sc.duration, n_steps + 1))
    q = state.q.copy()
    remaining = load_times
    while remaining:
        try:
            results = quasi_static_solve(
                built.model, built.loads, built.bc, built.cfg, remaining,
                state0=SystemState(q=q, qdot=np.zeros_like(q), t=remaining[0]),
                on_step=lambda s, r: record(s, r))
            state = results[-1][1]
            break
        except SnapDetected as snap:
            if built.on_snap != "dynamic":
                raise
            s_prev = snap.load_fraction
            snap_events.append(float(s_prev))
            after = [t for t in remaining if t > s_prev + 1e-12]
            if not after:
                state = snap.state
                break
            s_next = after[0]
            state = _dynamic_settle(built, snap.state, s_prev, s_next)
            # polish to equilibrium at s_next and continue from there
            q = state.q.copy()
            remaining = after
    return state


def _dynamic_settle(built, state, s_prev, s_next):
    """Ride through a snap: ramp the BC to s_next and damp into the well."""
    settle = built.settle
    T = float(settle.get("time", 1.0))
    cfg = replace(built.cfg,
                  alpha_damp=float(settle.get("alpha_damp", 20.0)),
                  dt=float(settle.get("dt", built.cfg.dt)))
    bc2 = BoundarySpec(built.model.dof.total)
    bc2.kind[:] = built.bc.kind
    ramp = 0.25 * T
    for dof, tab in built.bc.tables.items():
        bc2.prescribe(dof, [0.0, ramp, T],
                      [tab(s_prev), tab(s_next), tab(s_next)])
    st = SystemState(q=state.q.copy(), qdot=np.zeros(built.model.dof.total),
                     t=0.0)
    st = dynamic_run(st, built.model, built.loads, bc2, cfg, T)
    return SystemState(q=st.q, qdot=np.zeros_like(st.q), t=s_next)


def _energy_dict(built, state):
    br = built.model.energy_breakdown(state.q)
    return {"stretch": br.stretch, "bend": br.bend, "rotation": br.rotation,
            "total_elastic": br.total}


def _peaks(records):
    peaks = {}
    if not records:
        return peaks
    for key in records[0]:
        if key == "t":
            continue
        vals = [r[key] for r in records if np.isfinite(r.get(key, np.nan))]
        if vals:
            peaks[key] = {"max": max(vals), "min": min(vals)}
    return peaks


def _write_csv(path, records):
    if not records:
        Path(path).write_text("t\n", encoding="utf-8")
        return
    cols = list(records[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for r in records:
            w.writerow([repr(r.get(c, "")) for c in cols])
