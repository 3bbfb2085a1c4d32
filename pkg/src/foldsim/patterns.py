"""Canonical origami pattern generators.

Every generator returns (TriMesh, CreaseSet) with named vertex/edge/face
groups for boundary conditions and probes.  Rest angles are measured from
the generated configuration unless stated otherwise, so freshly generated
models sit at zero elastic energy (the flexible Waterbomb is the
exception: its reference is the flat sheet and the crease rest angles are
prescribed, which is what drives its spontaneous bending).

Sign convention (see ``geometry``): positive dihedral = valley seen from
the +normal side.  Generators orient sheets counter-clockwise seen from
+z, so mountain folds (ridges toward +z) carry negative angles.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidSectorAngle, OutOfRange
from .geometry import dihedral_angle
from .mesh import CreaseSet, TriMesh, build_mesh, mark_creases

__all__ = [
    "gen_single_fold", "gen_miura", "gen_waterbomb", "gen_kresling",
    "miura_state", "miura_vertices", "miura_poisson_WL",
    "miura_nu_from_dihedral", "miura_rho_from_extent",
    "kresling_conjugate_state", "set_rest_from_positions",
]


def _measure_dihedrals(mesh, creases, positions=None):
    p = mesh.vertices if positions is None else np.asarray(positions)
    out = np.empty(creases.n_segments)
    for s in range(creases.n_segments):
        e = creases.edge[s]
        lo, hi = mesh.edges[e]
        f0, f1 = mesh.edge_faces[e]
        a0 = int(np.nonzero(mesh.tri_edges[f0] == e)[0][0])
        a1 = int(np.nonzero(mesh.tri_edges[f1] == e)[0][0])
        out[s] = dihedral_angle(p[lo], p[hi],
                                p[mesh.triangles[f0, a0]],
                                p[mesh.triangles[f1, a1]])
    return out


def set_rest_from_positions(mesh, creases, positions=None):
    """CreaseSet copy whose rest angles are the measured mesh dihedrals."""
    from dataclasses import replace
    return replace(creases, rest_angle=_measure_dihedrals(mesh, creases,
                                                          positions))


# ---------------------------------------------------------------------------
# single fold
# ---------------------------------------------------------------------------

def gen_single_fold(panel_len, panel_width, phi0, n_div, n_len=None, k_r=1.0):
    """Two rectangular panels joined along a crease of n_div segments.

    ``phi0`` is the signed mesh dihedral of the built state (0 = flat,
    positive = valley toward +z); the crease rest angle is set to it.
    Panels span ``panel_len`` perpendicular to the crease and
    ``panel_width`` along it; ``n_len`` grid divisions per panel default
    to a roughly square tiling.  The triangulation is mirror symmetric
    about both the crease and the mid-width line (even n_div recommended).
    """
    if panel_len <= 0 or panel_width <= 0 or n_div < 1:
        raise ValueError("positive dimensions and n_div >= 1 required")
    if n_len is None:
        n_len = max(1, round(n_div * panel_len / panel_width))
    th = 0.5 * abs(phi0)
    zs = 1.0 if phi0 >= 0 else -1.0
    dirs = {+1: np.array([np.cos(th), 0.0, zs * np.sin(th)]),
            -1: np.array([-np.cos(th), 0.0, zs * np.sin(th)])}

    ys = np.linspace(0.0, panel_width, n_div + 1)
    us = np.linspace(0.0, panel_len, n_len + 1)
    verts = []
    index = {}
    for iu in range(-n_len, n_len + 1):
        side = 1 if iu > 0 else (-1 if iu < 0 else 0)
        for iy in range(n_div + 1):
            if side == 0:
                pos = np.array([0.0, ys[iy], 0.0])
            else:
                pos = us[abs(iu)] * dirs[side] + np.array([0.0, ys[iy], 0.0])
            index[(iu, iy)] = len(verts)
            verts.append(pos)

    tris = []
    for iu in range(-n_len, n_len):
        for iy in range(n_div):
            p00 = index[(iu, iy)]       # low x, low y
            p10 = index[(iu + 1, iy)]
            p01 = index[(iu, iy + 1)]
            p11 = index[(iu + 1, iy + 1)]
            main_diag = (2 * iy + 1 < n_div) ^ (iu < 0)
            if main_diag:
                tris.append((p00, p10, p11))
                tris.append((p00, p11, p01))
            else:
                tris.append((p00, p10, p01))
                tris.append((p10, p11, p01))

    mesh = build_mesh(np.asarray(verts), np.asarray(tris))
    chain = [index[(0, iy)] for iy in range(n_div + 1)]
    creases = mark_creases(mesh, [chain], k_r, 0.0, group="fold")
    creases = set_rest_from_positions(mesh, creases)

    mesh.vertex_groups["crease"] = np.array(chain)
    mesh.vertex_groups["end_A"] = np.array(
        [index[(-n_len, iy)] for iy in range(n_div + 1)])
    mesh.vertex_groups["end_B"] = np.array(
        [index[(n_len, iy)] for iy in range(n_div + 1)])
    mesh.vertex_groups["end_A_mid"] = np.array([index[(-n_len, n_div // 2)]])
    mesh.vertex_groups["end_B_mid"] = np.array([index[(n_len, n_div // 2)]])
    mesh.vertex_groups["point_A"] = np.array([index[(0, 0)]])
    mesh.vertex_groups["point_B"] = np.array([index[(0, n_div)]])
    mesh.vertex_groups["edge_y0"] = np.array(
        [index[(iu, 0)] for iu in range(-n_len, n_len + 1)])
    mesh.vertex_groups["edge_yW"] = np.array(
        [index[(iu, n_div)] for iu in range(-n_len, n_len + 1)])
    return mesh, creases


# ---------------------------------------------------------------------------
# Miura
# ---------------------------------------------------------------------------

def miura_state(a, b, gamma, rho):
    """Rigid-folding parameters (ell, H, w, v) of the Miura corrugation.

    Vertices sit on the grid x = i ell + (j mod 2) w, y = j v,
    z = (i mod 2) H.  The family keeps facet edge lengths (a along the
    zigzag, b along the corrugation) and the sector angle gamma exact for
    any fold parameter rho in [0, gamma):

        ell = b cos rho, H = b sin rho,
        w = a cos gamma / cos rho, v = sqrt(a^2 - w^2).

    rho = 0 is the flat sheet; rho -> gamma is fully folded.
    """
    if not 0.0 < gamma < 0.5 * np.pi:
        raise InvalidSectorAngle("gamma must lie in (0, pi/2)")
    if not 0.0 <= rho < gamma:
        raise OutOfRange(f"fold parameter rho={rho} outside [0, gamma)")
    ell = b * np.cos(rho)
    H = b * np.sin(rho)
    w = a * np.cos(gamma) / np.cos(rho)
    v2 = a * a - w * w
    if v2 <= 0:
        raise OutOfRange("fold parameter too close to gamma")
    return ell, H, w, np.sqrt(v2)


def miura_vertices(m, n, a, b, gamma, rho):
    """Closed-form rigid-folding vertex grid ((2m+1) x (2n+1) x 3)."""
    ell, H, w, v = miura_state(a, b, gamma, rho)
    i = np.arange(2 * m + 1)
    j = np.arange(2 * n + 1)
    I, J = np.meshgrid(i, j, indexing="ij")
    P = np.empty((2 * m + 1, 2 * n + 1, 3))
    P[..., 0] = I * ell + (J % 2) * w
    P[..., 1] = J * v
    P[..., 2] = (I % 2) * H
    return P


def miura_poisson_WL(gamma, rho):
    """In-plane Poisson ratio nu_WL = -cos^2 gamma / (cos^2 rho - cos^2 gamma).

    Strain coupling of the zigzag (W = y) direction to the corrugation
    (L = x) direction; negative throughout the folding range.
    """
    cg2 = np.cos(gamma) ** 2
    return -cg2 / (np.cos(rho) ** 2 - cg2)


def miura_nu_from_dihedral(phi_L, gamma):
    """Expected curvature ratio -kappa_W / kappa_L = -nu_WL from the
    measured corrugation-crease dihedral(s).

    For the L-family creases, tan(|phi|/2) = sin rho cos gamma /
    sqrt(cos^2 rho - cos^2 gamma), which inverts to
    -nu_WL = (tan^2(|phi|/2) + cos^2 gamma) / sin^2 gamma.
    """
    T = np.tan(0.5 * np.abs(phi_L)) ** 2
    return (T + np.cos(gamma) ** 2) / np.sin(gamma) ** 2


def miura_rho_from_extent(x_extent, m, b):
    """Fold parameter from the corrugation-direction extent 2 m ell."""
    c = x_extent / (2.0 * m * b)
    if not 0.0 < c <= 1.0:
        raise OutOfRange("extent incompatible with rigid folding")
    return float(np.arccos(c))


def gen_miura(m, n, a=1.0, b=1.0, gamma=np.pi / 3, rho=0.5, k_r=1.0):
    """m x n array of Miura cells built in the rigid-folding state rho.

    Each parallelogram facet splits into two triangles along its shorter
    diagonal (a plain shell edge, not a crease).  Crease groups:
    "creases_L" (corrugation-direction lines, length-b segments) and
    "creases_W" (zigzag lines, length-a segments).  Probe-line node pairs
    for the coarse mid-surface are attached as ``mesh.probe_lines``.
    """
    if m < 1 or n < 1:
        raise ValueError("m, n >= 1")
    P = miura_vertices(m, n, a, b, gamma, rho)
    ni, nj = P.shape[0], P.shape[1]
    idx = np.arange(ni * nj).reshape(ni, nj)
    verts = P.reshape(-1, 3)

    tris = []
    for i in range(ni - 1):
        for j in range(nj - 1):
            p00, p10 = idx[i, j], idx[i + 1, j]
            p01, p11 = idx[i, j + 1], idx[i + 1, j + 1]
            if (np.linalg.norm(verts[p00] - verts[p11])
                    <= np.linalg.norm(verts[p10] - verts[p01])):
                tris.append((p00, p10, p11))
                tris.append((p00, p11, p01))
            else:
                tris.append((p00, p10, p01))
                tris.append((p10, p11, p01))
    mesh = build_mesh(verts, np.asarray(tris))

    chains_L = [[idx[i, j] for i in range(ni)] for j in range(1, nj - 1)]
    chains_W = [[idx[i, j] for j in range(nj)] for i in range(1, ni - 1)]
    creases = mark_creases(mesh, chains_L, k_r, 0.0, group="creases_L")
    creases = mark_creases(mesh, chains_W, k_r, 0.0, existing=creases,
                           group="creases_W")
    creases = set_rest_from_positions(mesh, creases)
    # L segments in the central third of the sheet (local fold-state probe
    # for the curvature region)
    center = []
    span_x = float(np.ptp(verts[:, 0]))
    span_y = float(np.ptp(verts[:, 1]))
    cx, cy = verts[:, 0].mean(), verts[:, 1].mean()
    for sgi in creases.groups["creases_L"]:
        lo, hi = mesh.edges[creases.edge[sgi]]
        mid = 0.5 * (verts[lo] + verts[hi])
        if abs(mid[0] - cx) <= span_x / 6 and abs(mid[1] - cy) <= span_y / 6:
            center.append(sgi)
    if center:
        creases.groups["creases_L_center"] = np.asarray(center)

    mesh.vertex_groups["left_end"] = idx[0, :].copy()
    mesh.vertex_groups["right_end"] = idx[-1, :].copy()
    # even-j boundary nodes sit at x = i*ell for every fold state, so they
    # are the ones rigid-folding-compatible x constraints may act on
    mesh.vertex_groups["left_end_even"] = idx[0, 0::2].copy()
    mesh.vertex_groups["right_end_even"] = idx[-1, 0::2].copy()
    mesh.vertex_groups["front_row"] = idx[:, 0].copy()
    mesh.vertex_groups["back_row"] = idx[:, -1].copy()
    mesh.vertex_groups["corner_00"] = np.array([idx[0, 0]])
    mesh.vertex_groups["corner_0W"] = np.array([idx[0, -1]])
    mesh.vertex_groups["corners"] = np.array(
        [idx[0, 0], idx[-1, 0], idx[0, -1], idx[-1, -1]])
    jc = nj // 2
    ic = ni // 2
    # four-point bending stations on the center corrugation line
    mesh.vertex_groups["P1"] = np.array([idx[0, jc]])
    mesh.vertex_groups["P2"] = np.array([idx[min(2, ni - 1), jc]])
    mesh.vertex_groups["P3"] = np.array([idx[max(ni - 3, 0), jc]])
    mesh.vertex_groups["P4"] = np.array([idx[-1, jc]])
    # coarse mid-surface stations: 2x2 vertex blocks averaging out the
    # corrugation in both directions
    jc2 = min(jc + 1, nj - 1)
    ic2 = min(ic + 1, ni - 1)
    mesh.probe_lines = {
        "L": [np.array([idx[2 * s, jc], idx[2 * s + 1, jc],
                        idx[2 * s, jc2], idx[2 * s + 1, jc2]])
              for s in range(m)],
        "W": [np.array([idx[ic, 2 * r], idx[ic, 2 * r + 1],
                        idx[ic2, 2 * r], idx[ic2, 2 * r + 1]])
              for r in range(n)],
    }
    mesh.pattern_meta = {"generator": "miura", "m": m, "n": n, "a": a,
                         "b": b, "gamma": gamma, "rho": rho}
    return mesh, creases


# ---------------------------------------------------------------------------
# Waterbomb
# ---------------------------------------------------------------------------

def gen_waterbomb(variant, size=1.0, rest_angle=-1.0, n_div=8, k_r=1.0,
                  apex_angle=np.deg2rad(75.0)):
    """Waterbomb units.

    variant "flexible4": flat square sheet (side ``size``) with four
    mountain creases along the edge-parallel symmetry axes.  The reference
    is the flat sheet; ``rest_angle`` (negative = mountain toward +z
    normals) prescribes the plastically formed folds, so the generated
    model is residually stressed and settles into its bowed stable state
    dynamically.  Even ``n_div`` grid per side; cell diagonals point
    radially so the mesh honors the pattern's symmetry group.

    variant "rigid12": hexagonal waterbomb base, a single degree-12 vertex
    with 12 alternating mountain/valley radial creases and 12 rigid
    triangular facets (fan triangulation is trivial here).  Built directly
    in the folded cone state given by ``apex_angle`` (corner-ray polar
    angle from the downward axis); rest angles are the measured dihedrals
    and corners sit on z = 0.  ``size`` is the hexagon circumradius.
    """
    if variant == "flexible4":
        return _waterbomb_flexible(size, rest_angle, n_div, k_r)
    if variant == "rigid12":
        return _waterbomb_rigid12(size, apex_angle, k_r)
    raise ValueError(f"unknown waterbomb variant {variant!r}")


def _waterbomb_flexible(size, rest_angle, n_div, k_r):
    if n_div % 2 or n_div < 2:
        raise ValueError("flexible4 needs an even n_div >= 2")
    half = n_div // 2
    xs = np.linspace(-0.5 * size, 0.5 * size, n_div + 1)
    idx = np.arange((n_div + 1) ** 2).reshape(n_div + 1, n_div + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])

    tris = []
    for i in range(n_div):
        for j in range(n_div):
            p00, p10 = idx[i, j], idx[i + 1, j]
            p01, p11 = idx[i, j + 1], idx[i + 1, j + 1]
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (xs[j] + xs[j + 1])
            if cx * cy > 0:
                tris.append((p00, p10, p11))
                tris.append((p00, p11, p01))
            else:
                tris.append((p00, p10, p01))
                tris.append((p10, p11, p01))
    mesh = build_mesh(verts, np.asarray(tris))

    chains = [
        [idx[i, half] for i in range(half, n_div + 1)],          # +x
        [idx[i, half] for i in range(half, -1, -1)],             # -x
        [idx[half, j] for j in range(half, n_div + 1)],          # +y
        [idx[half, j] for j in range(half, -1, -1)],             # -y
    ]
    creases = mark_creases(mesh, chains, k_r, rest_angle, group="mountain")

    mesh.vertex_groups["center"] = np.array([idx[half, half]])
    mesh.vertex_groups["corner_pin"] = np.array([idx[0, 0]])
    mesh.vertex_groups["corners"] = np.array(
        [idx[0, 0], idx[-1, 0], idx[0, -1], idx[-1, -1]])
    rim = sorted(set(idx[0, :]) | set(idx[-1, :]) | set(idx[:, 0])
                 | set(idx[:, -1]))
    mesh.vertex_groups["rim"] = np.array(rim)
    return mesh, creases


def _waterbomb_rigid12(size, apex_angle, k_r):
    ac = float(apex_angle)
    if not 0.05 < ac <= 0.5 * np.pi:
        raise ValueError("apex_angle must lie in (0, pi/2]")
    # sector angle between adjacent rays is 30 deg; solve for the midpoint
    # ray polar angle keeping the sectors isometric
    c30 = np.cos(np.pi / 6)
    A = np.cos(ac)
    B = np.sin(ac) * c30
    R_ = np.hypot(A, B)
    am = np.arctan2(B, A) + np.arccos(np.clip(c30 / R_, -1.0, 1.0))

    R = float(size)
    Rm = R * c30
    verts = [np.zeros(3)]
    ring = []
    for kk in range(12):
        beta = kk * np.pi / 6
        alpha, rad = (ac, R) if kk % 2 == 0 else (am, Rm)
        ray = np.array([np.sin(alpha) * np.cos(beta),
                        np.sin(alpha) * np.sin(beta),
                        -np.cos(alpha)])
        ring.append(len(verts))
        verts.append(rad * ray)
    verts = np.asarray(verts)
    verts[:, 2] -= verts[ring[0], 2]          # corners on the ground plane

    tris = [(0, ring[kk], ring[(kk + 1) % 12]) for kk in range(12)]
    mesh = build_mesh(verts, np.asarray(tris))
    creases = mark_creases(mesh, [[0, r] for r in ring], k_r, 0.0,
                           group="radial")
    creases = set_rest_from_positions(mesh, creases)

    mesh.vertex_groups["center"] = np.array([0])
    mesh.vertex_groups["corners"] = np.array(ring[0::2])
    mesh.vertex_groups["midpoints"] = np.array(ring[1::2])
    mesh.vertex_groups["rim"] = np.array(ring)
    return mesh, creases


# ---------------------------------------------------------------------------
# Kresling
# ---------------------------------------------------------------------------

def kresling_conjugate_state(n_gon, radius, height, twist):
    """The second zero-membrane-strain state (height', twist') of a unit.

    Both diagonal families and the ring polygons keep their lengths at
    twist' = beta + pi - twist (beta = 2 pi / n) with the height that
    preserves the long diagonal.  Raises OutOfRange when the conjugate
    state is imaginary (monostable geometry).
    """
    beta = 2.0 * np.pi / n_gon
    chi2 = beta + np.pi - twist
    h2sq = height ** 2 + 4.0 * radius ** 2 * (
        np.sin(0.5 * twist) ** 2 - np.sin(0.5 * chi2) ** 2)
    if h2sq <= 0:
        raise OutOfRange("no real conjugate state for this geometry")
    return float(np.sqrt(h2sq)), float(chi2)


def gen_kresling(n_gon, radius, height, twist, n_units=1, stacking="uniform",
                 compliant=False, panel_div=None, end_caps=False,
                 k_r_valley=1.0, k_r_mountain=1.0, k_r_ring=1.0,
                 k_r_cap=10.0, axis="z"):
    """Stacked Kresling units.

    Each unit spans two n-gon rings with relative ``twist``; "alternating"
    stacking mirrors the twist sense per unit.  Triangulation follows the
    Kresling pattern (the short diagonal family is "mountains", the long
    one "valleys"; transverse ring edges between units are "rings").

    compliant=True removes the mountain creases and opens slits along
    them: panels are subdivided (``panel_div`` >= 2, default 2) and the
    interior vertices of every mountain diagonal are duplicated per side,
    leaving free boundary edges pinned at the ring nodes.

    end_caps=True adds fan-triangulated end plates (face group "caps",
    hinge creases "cap_hinges") whose centers are "cap_center_0/1".
    ``axis`` = "x" lays the tube along x (crawling orientation).
    """
    if n_gon < 3 or n_units < 1:
        raise ValueError("n_gon >= 3 and n_units >= 1")
    if stacking not in ("uniform", "alternating"):
        raise ValueError("stacking must be uniform or alternating")
    if panel_div is None:
        panel_div = 2 if compliant else 1
    if compliant and panel_div < 2:
        raise ValueError("compliant slits need panel_div >= 2")

    beta = 2.0 * np.pi / n_gon
    ring_phase = [0.0]
    for u in range(n_units):
        s = 1.0 if (stacking == "uniform" or u % 2 == 0) else -1.0
        ring_phase.append(ring_phase[-1] + s * twist)

    cverts = []
    ring_ids = []
    for u in range(n_units + 1):
        ids = []
        for i in range(n_gon):
            ang = ring_phase[u] + i * beta
            ids.append(len(cverts))
            cverts.append((radius * np.cos(ang), radius * np.sin(ang),
                           u * height))
        ring_ids.append(ids)

    ctris = []
    mountain_edges = []
    valley_edges = []
    side_faces_per_unit = []
    for u in range(n_units):
        bot, top = ring_ids[u], ring_ids[u + 1]
        chi_u = ring_phase[u + 1] - ring_phase[u]
        faces_u = []
        for i in range(n_gon):
            b0, b1 = bot[i], bot[(i + 1) % n_gon]
            t0, t1 = top[i], top[(i + 1) % n_gon]
            if chi_u >= 0:
                faces_u.append(len(ctris)); ctris.append((b0, b1, t0))
                faces_u.append(len(ctris)); ctris.append((b1, t1, t0))
                mountain_edges.append((b1, t0))
                valley_edges.append((b0, t0))
            else:
                faces_u.append(len(ctris)); ctris.append((b0, b1, t1))
                faces_u.append(len(ctris)); ctris.append((b0, t1, t0))
                mountain_edges.append((b0, t1))
                valley_edges.append((b0, t0))
        side_faces_per_unit.append(faces_u)

    ring_edges = []
    for u in range(1, n_units):
        ids = ring_ids[u]
        ring_edges += [(ids[i], ids[(i + 1) % n_gon]) for i in range(n_gon)]

    cap_faces = {}
    cap_hinge_edges = []
    cap_centers = {}
    if end_caps:
        for which, u in (("0", 0), ("1", n_units)):
            ids = ring_ids[u]
            c = len(cverts)
            cverts.append((0.0, 0.0, u * height))
            cap_centers[which] = c
            faces = []
            for i in range(n_gon):
                r0, r1 = ids[i], ids[(i + 1) % n_gon]
                faces.append(len(ctris))
                # outward orientation: -z at the bottom, +z at the top
                ctris.append((c, r1, r0) if u == 0 else (c, r0, r1))
                cap_hinge_edges.append((r0, r1))
            cap_faces[which] = faces

    cverts = np.asarray(cverts, dtype=np.float64)
    ctris = np.asarray(ctris, dtype=np.int64)

    slits = set()
    if compliant:
        slits = {tuple(sorted(e)) for e in mountain_edges}
    fverts, ftris, chain_of, face_map = _refine_with_slits(
        cverts, ctris, panel_div, slits)
    mesh = build_mesh(fverts, ftris)

    def chains(pairs):
        return [chain_of[tuple(sorted(e))] for e in pairs]

    creases = CreaseSet.empty()
    creases = mark_creases(mesh, chains(valley_edges), k_r_valley, 0.0,
                           existing=creases, group="valleys")
    if not compliant:
        creases = mark_creases(mesh, chains(mountain_edges), k_r_mountain,
                               0.0, existing=creases, group="mountains")
    if ring_edges:
        creases = mark_creases(mesh, chains(ring_edges), k_r_ring, 0.0,
                               existing=creases, group="rings")
    if cap_hinge_edges:
        creases = mark_creases(mesh, chains(cap_hinge_edges), k_r_cap, 0.0,
                               existing=creases, group="cap_hinges")
    creases = set_rest_from_positions(mesh, creases)

    # ring vertex groups (coarse ring vertices are lattice corners)
    for u, ids in enumerate(ring_ids):
        ring_fine = np.array([face_map["corner"][i] for i in ids])
        mesh.vertex_groups[f"ring_{u}"] = ring_fine
        members = set(ring_fine.tolist())
        touch = [f for f in range(mesh.n_triangles)
                 if members & set(mesh.triangles[f].tolist())]
        mesh.face_groups[f"ring_faces_{u}"] = np.array(touch, dtype=np.int64)
    side_all = []
    for u, faces_u in enumerate(side_faces_per_unit):
        ff = np.concatenate([face_map["faces"][f] for f in faces_u])
        mesh.face_groups[f"unit_{u}"] = ff
        side_all.append(ff)
    mesh.face_groups["side"] = np.concatenate(side_all)
    if end_caps:
        allcap = []
        for which, faces in cap_faces.items():
            ff = np.concatenate([face_map["faces"][f] for f in faces])
            mesh.face_groups[f"cap_{which}"] = ff
            allcap.append(ff)
            mesh.vertex_groups[f"cap_center_{which}"] = np.array(
                [face_map["corner"][cap_centers[which]]])
        mesh.face_groups["caps"] = np.concatenate(allcap)

    if axis == "x":
        # rotate so the tube axis (z) lies along +x, keeping y
        R = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        mesh.vertices[:] = mesh.vertices @ R.T
        # foot nodes: the lowest vertex of each end ring (crawling contact)
        for which, u in (("0", 0), ("1", n_units)):
            ring = mesh.vertex_groups[f"ring_{u}"]
            z = mesh.vertices[ring, 2]
            mesh.vertex_groups[f"foot_{which}"] = ring[
                np.abs(z - z.min()) < 1e-9]
    elif axis != "z":
        raise ValueError("axis must be 'z' or 'x'")

    mesh.pattern_meta = {"generator": "kresling", "n_gon": n_gon,
                         "radius": radius, "height": height, "twist": twist,
                         "n_units": n_units, "stacking": stacking,
                         "compliant": compliant}
    return mesh, creases


def _refine_with_slits(cverts, ctris, k, slit_edges):
    """Split every triangle into k^2, cutting open the given coarse edges.

    Corner and (non-slit) edge lattice points are shared; slit edges give
    each adjacent face its own interior edge points, leaving the endpoints
    shared (slit tips pinned).  Returns (verts, tris, chain_of, face_map):
    ``chain_of[(u, v)]`` is the fine vertex chain along coarse edge (u, v)
    (the owning side's chain for slits), ``face_map["corner"]`` maps coarse
    vertex -> fine id and ``face_map["faces"]`` coarse face -> fine ids.
    """
    verts = []
    lookup = {}

    def intern(key, pos):
        if key not in lookup:
            lookup[key] = len(verts)
            verts.append(np.asarray(pos, dtype=np.float64))
        return lookup[key]

    def edge_point(u, v, step, face):
        lo, hi = (u, v) if u < v else (v, u)
        i_lo = step if u == lo else k - step
        if (lo, hi) in slit_edges:
            key = ("es", lo, hi, i_lo, face)
        else:
            key = ("e", lo, hi, i_lo)
        frac = i_lo / k
        pos = cverts[lo] + frac * (cverts[hi] - cverts[lo])
        return intern(key, pos)

    corner = {}
    for tri in ctris:
        for v in tri:
            corner[int(v)] = intern(("c", int(v)), cverts[v])

    ftris = []
    face_fine = []
    chain_owner = {}
    for f, (v0, v1, v2) in enumerate(ctris):
        v0, v1, v2 = int(v0), int(v1), int(v2)
        grid = {}
        for r in range(k + 1):
            for s in range(k + 1 - r):
                u = k - r - s
                if u == k:
                    grid[(r, s)] = corner[v0]
                elif r == k:
                    grid[(r, s)] = corner[v1]
                elif s == k:
                    grid[(r, s)] = corner[v2]
                elif s == 0:
                    grid[(r, s)] = edge_point(v0, v1, r, f)
                elif r == 0:
                    grid[(r, s)] = edge_point(v0, v2, s, f)
                elif u == 0:
                    grid[(r, s)] = edge_point(v1, v2, s, f)
                else:
                    pos = (cverts[v0] * (u / k) + cverts[v1] * (r / k)
                           + cverts[v2] * (s / k))
                    grid[(r, s)] = intern(("i", f, r, s), pos)
        start = len(ftris)
        for r in range(k):
            for s in range(k - r):
                ftris.append((grid[(r, s)], grid[(r + 1, s)],
                              grid[(r, s + 1)]))
                if r + s < k - 1:
                    ftris.append((grid[(r + 1, s)], grid[(r + 1, s + 1)],
                                  grid[(r, s + 1)]))
        face_fine.append(np.arange(start, len(ftris)))
        for (ea, eb) in ((v0, v1), (v0, v2), (v1, v2)):
            key = tuple(sorted((ea, eb)))
            chain_owner.setdefault(key, f)

    chain_of = {}
    for (lo, hi), f in chain_owner.items():
        ids = [corner[lo]]
        for i in range(1, k):
            if (lo, hi) in slit_edges:
                ids.append(lookup[("es", lo, hi, i, f)])
            else:
                ids.append(lookup[("e", lo, hi, i)])
        ids.append(corner[hi])
        chain_of[(lo, hi)] = ids

    face_map = {"corner": corner, "faces": face_fine}
    return np.asarray(verts), np.asarray(ftris, dtype=np.int64), chain_of, \
        face_map
