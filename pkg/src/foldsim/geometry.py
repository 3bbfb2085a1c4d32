"""Discrete differential geometry kernels.

All 2x2 tensors live in the per-triangle edge basis {v_j - v_i, v_k - v_i}.
Mid-edge normals follow the crease-as-boundary rule: a boundary or crease
edge contributes the owning face's unit normal, an interior edge the
normalized average of its two face normals.

Sign convention for the mesh dihedral: for the edge with endpoints
(lo, hi), lo < hi, let T1 be the face whose counter-clockwise boundary
contains lo->hi and T2 the other face.  Then

    phi = atan2((n2 x n1) . e_hat, n1 . n2),   e_hat = unit(hi - lo).

phi is positive when the two faces fold toward the side their normals
point to (a valley seen from the normal side), and flips sign when the
face order is swapped.  With this convention the dihedral-based second
fundamental form sin(phi/2)/(a/2) (e* x e*) reproduces the mid-edge
primal form exactly on a two-triangle patch, from either face's basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OppositeNormals
from .mesh import EDGE_INTERIOR


def _cross(a, b):
    """Row-wise cross product without numpy.cross's axis shuffling."""
    c = np.empty(np.broadcast(a, b).shape)
    c[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    c[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    c[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return c

_AVG_NORM_FLOOR = 1e-8


def first_form(p_i, p_j, p_k):
    """Discrete first fundamental form: Gram matrix of (p_j-p_i, p_k-p_i).

    Accepts single points or stacked (..., 3) arrays; returns (..., 2, 2).
    """
    p_i = np.asarray(p_i, dtype=np.float64)
    d1 = np.asarray(p_j, dtype=np.float64) - p_i
    d2 = np.asarray(p_k, dtype=np.float64) - p_i
    a00 = np.sum(d1 * d1, axis=-1)
    a01 = np.sum(d1 * d2, axis=-1)
    a11 = np.sum(d2 * d2, axis=-1)
    out = np.empty(a00.shape + (2, 2))
    out[..., 0, 0] = a00
    out[..., 0, 1] = a01
    out[..., 1, 0] = a01
    out[..., 1, 1] = a11
    return out


def d_first_form(p_i, p_j, p_k):
    """Derivative of the first form w.r.t. the three vertices.

    Returns (..., 3 vertices, 3 coords, 2, 2): entry [v, x, p, q] is
    d A_pq / d (vertex v, coordinate x).
    """
    p_i = np.asarray(p_i, dtype=np.float64)
    d1 = np.asarray(p_j, dtype=np.float64) - p_i
    d2 = np.asarray(p_k, dtype=np.float64) - p_i
    base = d1.shape[:-1]
    dj = np.zeros(base + (3, 2, 2))
    dk = np.zeros(base + (3, 2, 2))
    # dA00 = 2 d1 . dd1 ; dA01 = dA10 = d2 . dd1 + d1 . dd2 ; dA11 = 2 d2 . dd2
    dj[..., :, 0, 0] = 2.0 * d1
    dj[..., :, 0, 1] = d2
    dj[..., :, 1, 0] = d2
    dk[..., :, 1, 1] = 2.0 * d2
    dk[..., :, 0, 1] = d1
    dk[..., :, 1, 0] = d1
    return np.stack([-(dj + dk), dj, dk], axis=-4)


def face_normals(positions, triangles):
    """Unit face normals (Nt, 3) and twice-areas (Nt,) for CCW triangles."""
    p = np.asarray(positions)
    t = np.asarray(triangles)
    c = _cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
    nrm = np.linalg.norm(c, axis=-1)
    return c / nrm[:, None], nrm


@dataclass
class MidEdgeNormals:
    """Unit normals attached to edge midpoints.

    ``per_edge[e]`` holds the averaged normal for interior edges and the
    owning (column-0) face normal for boundary and crease edges.  Because a
    crease edge acts as a boundary for both flanking panels, energy
    assembly must use :meth:`for_triangle`, which substitutes each face's
    own normal at its crease edges.
    """

    per_edge: np.ndarray
    face_normal: np.ndarray
    _mesh: object

    def for_triangle(self, t):
        """(3, 3) mid-edge normals at the edges opposite each local vertex."""
        mesh = self._mesh
        out = np.empty((3, 3))
        for a in range(3):
            e = mesh.tri_edges[t, a]
            if mesh.edge_flags[e] == EDGE_INTERIOR:
                out[a] = self.per_edge[e]
            else:
                out[a] = self.face_normal[t]
        return out


def mid_edge_normals(mesh, positions):
    """Mid-edge normal field for the whole mesh.

    Raises OppositeNormals when an interior edge is folded so far that the
    two face normals cancel (|average| < 1e-8).
    """
    fn, _ = face_normals(positions, mesh.triangles)
    per_edge = fn[mesh.edge_faces[:, 0]].copy()
    interior = mesh.edge_flags == EDGE_INTERIOR
    n_sum = fn[mesh.edge_faces[interior, 0]] + fn[mesh.edge_faces[interior, 1]]
    nrm = np.linalg.norm(n_sum, axis=-1)
    if np.any(nrm < _AVG_NORM_FLOOR):
        e = np.nonzero(interior)[0][np.argmin(nrm)]
        raise OppositeNormals(
            f"interior edge {tuple(mesh.edges[e])} folded to dihedral pi")
    per_edge[interior] = n_sum / nrm[:, None]
    return MidEdgeNormals(per_edge=per_edge, face_normal=fn, _mesh=mesh)


def second_form(mesh, positions, normals, triangle):
    """Discrete second fundamental form of one triangle.

    ``normals`` is a MidEdgeNormals field.  The per-vertex normals of the
    tensor are the mid-edge normals of the edges opposite each vertex.
    """
    p = np.asarray(positions)
    i, j, k = mesh.triangles[triangle]
    n = normals.for_triangle(triangle)
    d1 = p[j] - p[i]
    d2 = p[k] - p[i]
    return 2.0 * np.array([
        [np.dot(n[1] - n[0], d1), np.dot(n[1] - n[0], d2)],
        [np.dot(n[2] - n[0], d1), np.dot(n[2] - n[0], d2)],
    ])


@dataclass
class DihedralPair:
    """Signed dihedral at an interior edge plus per-face dual-edge data.

    ``phi`` follows the module sign convention.  ``dual_edge`` and
    ``altitude`` hold (e*, a) for faces (T1, T2) in canonical order.
    """

    edge: int
    faces: tuple
    phi: float
    dual_edge: np.ndarray   # (2, 3) unit in-plane perpendiculars of the edge
    altitude: np.ndarray    # (2,) triangle altitudes over the edge


def dihedral_angle(x0, x1, x2, x3):
    """Signed dihedral for edge x0->x1 with opposite vertices x2 (T1), x3 (T2).

    T1 = (x0, x1, x2) must contain the directed edge x0->x1 in CCW order.
    Batched over leading dimensions.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    x3 = np.asarray(x3, dtype=np.float64)
    e = x1 - x0
    eh = e / np.linalg.norm(e, axis=-1, keepdims=True)
    c1 = _cross(x1 - x0, x2 - x0)
    c2 = _cross(x0 - x1, x3 - x1)
    n1 = c1 / np.linalg.norm(c1, axis=-1, keepdims=True)
    n2 = c2 / np.linalg.norm(c2, axis=-1, keepdims=True)
    s = np.sum(_cross(n2, n1) * eh, axis=-1)
    c = np.sum(n1 * n2, axis=-1)
    return np.arctan2(s, c)


def d_dihedral(x0, x1, x2, x3):
    """Analytic gradient of :func:`dihedral_angle` w.r.t. the four points.

    Returns (..., 4, 3).  Standard hinge-stencil formulas: the opposite
    vertices move the angle along their face normals at rate |e| / (2 A),
    the endpoints carry the complementary lever-arm combinations.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    x3 = np.asarray(x3, dtype=np.float64)
    e = x1 - x0
    elen2 = np.sum(e * e, axis=-1)
    elen = np.sqrt(elen2)
    c1 = _cross(x1 - x0, x2 - x0)
    c2 = _cross(x0 - x1, x3 - x1)
    c1n = np.linalg.norm(c1, axis=-1)
    c2n = np.linalg.norm(c2, axis=-1)
    n1 = c1 / c1n[..., None]
    n2 = c2 / c2n[..., None]
    t1 = np.sum((x2 - x0) * e, axis=-1) / elen2
    t2 = np.sum((x3 - x0) * e, axis=-1) / elen2
    g2 = (elen / c1n)[..., None] * n1
    g3 = (elen / c2n)[..., None] * n2
    g0 = -(1.0 - t1)[..., None] * g2 - (1.0 - t2)[..., None] * g3
    g1 = -t1[..., None] * g2 - t2[..., None] * g3
    return np.stack([g0, g1, g2, g3], axis=-2)


def dihedral(mesh, positions, edge):
    """DihedralPair for an interior or crease edge of the mesh."""
    p = np.asarray(positions)
    f0, f1 = mesh.edge_faces[edge]
    if f1 == -1:
        raise ValueError("dihedral requires an edge with two faces")
    lo, hi = mesh.edges[edge]
    a0 = int(np.nonzero(mesh.tri_edges[f0] == edge)[0][0])
    x2 = mesh.triangles[f0, a0]
    a1 = int(np.nonzero(mesh.tri_edges[f1] == edge)[0][0])
    x3 = mesh.triangles[f1, a1]
    phi = float(dihedral_angle(p[lo], p[hi], p[x2], p[x3]))

    e = p[hi] - p[lo]
    elen = np.linalg.norm(e)
    eh = e / elen
    duals = np.empty((2, 3))
    alts = np.empty(2)
    for s, (f, opp) in enumerate(((f0, x2), (f1, x3))):
        w = (p[opp] - p[lo]) - np.dot(p[opp] - p[lo], eh) * eh
        alts[s] = np.linalg.norm(w)
        duals[s] = w / alts[s]
    return DihedralPair(edge=int(edge), faces=(int(f0), int(f1)), phi=phi,
                        dual_edge=duals, altitude=alts)


def dual_edge_sff(pair, angle, face):
    """Dihedral-angle-based second fundamental form contribution.

    Returns the 2x2 tensor sin(angle/2)/(a/2) (e* x e*) expressed in the
    requested face's edge basis.  ``face`` selects 0 (T1) or 1 (T2) of the
    pair; the mesh and positions used to build the pair fix the basis.
    """
    estar = pair.dual_edge[face]
    a = pair.altitude[face]
    coef = np.sin(0.5 * angle) / (0.5 * a)
    return coef, estar


def dual_edge_sff_matrix(mesh, positions, pair, angle, face):
    """As :func:`dual_edge_sff` but materialized in the face's edge basis."""
    coef, estar = dual_edge_sff(pair, angle, face)
    p = np.asarray(positions)
    f = pair.faces[face]
    i, j, k = mesh.triangles[f]
    d1 = p[j] - p[i]
    d2 = p[k] - p[i]
    w = np.array([np.dot(estar, d1), np.dot(estar, d2)])
    return coef * np.outer(w, w)


def d_second_form(mesh, positions, triangle):
    """Derivative of one triangle's second form w.r.t. vertex coordinates.

    Returns a dict mapping vertex id -> (3, 2, 2) array (coordinate axis
    first).  The stencil covers the triangle's own vertices plus the
    opposite vertices of its interior (non-crease) edge neighbors, whose
    positions enter through the averaged mid-edge normals.
    """
    p = np.asarray(positions, dtype=np.float64)
    t = int(triangle)
    i, j, k = mesh.triangles[t]
    verts = [int(i), int(j), int(k)]
    d1 = p[j] - p[i]
    d2 = p[k] - p[i]

    # own face normal and its jacobian w.r.t. (i, j, k)
    def unit_normal_jac(a, b, c):
        cvec = _cross(p[b] - p[a], p[c] - p[a])
        nrm = np.linalg.norm(cvec)
        nhat = cvec / nrm
        proj = (np.eye(3) - np.outer(nhat, nhat)) / nrm
        e1 = p[b] - p[a]
        e2 = p[c] - p[a]
        jac = {}
        # cvec = e1 x e2, de1 = db - da, de2 = dc - da
        Jb = proj @ (-_cross_mat(e2))         # db x e2 = -[e2]x db
        Jc = proj @ _cross_mat(e1)            # e1 x dc
        Ja = -(Jb + Jc)
        jac[a] = Ja
        jac[b] = Jb
        jac[c] = Jc
        return nhat, jac

    n_own, jac_own = unit_normal_jac(i, j, k)

    n_mid = []
    jac_mid = []
    for a in range(3):
        e = mesh.tri_edges[t, a]
        if mesh.edge_flags[e] != EDGE_INTERIOR:
            n_mid.append(n_own)
            jac_mid.append(dict(jac_own))
            continue
        f0, f1 = mesh.edge_faces[e]
        other = f1 if f0 == t else f0
        oi, oj, ok = mesh.triangles[other]
        n_nb, jac_nb = unit_normal_jac(int(oi), int(oj), int(ok))
        for v in (int(oi), int(oj), int(ok)):
            if v not in verts:
                verts.append(v)
        m = n_own + n_nb
        mn = np.linalg.norm(m)
        if mn < _AVG_NORM_FLOOR:
            raise OppositeNormals(f"edge {tuple(mesh.edges[e])} at dihedral pi")
        nm = m / mn
        pm = (np.eye(3) - np.outer(nm, nm)) / mn
        jac = {}
        for v, J in jac_own.items():
            jac[v] = pm @ J
        for v, J in jac_nb.items():
            jac[v] = jac.get(v, 0) + pm @ J
        n_mid.append(nm)
        jac_mid.append(jac)

    out = {v: np.zeros((3, 2, 2)) for v in verts}
    dn = [n_mid[1] - n_mid[0], n_mid[2] - n_mid[0]]
    dvec = [d1, d2]
    # B_rc = 2 (n_{r+1} - n_0) . d_{c+1}
    for r in range(2):
        for c in range(2):
            # edge-vector part
            for v, sgn in ((verts[0], -1.0), (verts[c + 1], 1.0)):
                out[v][:, r, c] += 2.0 * sgn * dn[r]
            # normal part
            for v in verts:
                Jp = jac_mid[r + 1].get(v)
                J0 = jac_mid[0].get(v)
                if Jp is not None:
                    out[v][:, r, c] += 2.0 * (Jp.T @ dvec[c])
                if J0 is not None:
                    out[v][:, r, c] -= 2.0 * (J0.T @ dvec[c])
    return out


def _cross_mat(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])
