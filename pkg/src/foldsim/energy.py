"""Elastic potential of the shell + crease system.

Total potential::

    Pi(q) = U_stretch + U_bend + U_rotation

with per-triangle stretching (h/8) |eps|_SV^2 sqrt(det Aref) and bending
(h^3/24) |kappa|_SV^2 sqrt(det Aref), where eps = Aref^-1 A - I and
kappa = Aref^-1 (B - Bref) plus, on faces flanking a crease, the
additional bending strain

    kappa_add = sin((phi - phi_v)/2) * Aref^-1 S,
    S = (e* . d)(e* . d)^T / (a/2),

which couples the mesh dihedral phi to the virtual fold angle phi_v.
Each crease segment also carries a torsional spring
(1/2) K_r (phi_v - phi0)^2 L.

The geometric factors of S (dual edge, altitude, reference form) are
evaluated on the reference configuration, so S is a constant tensor per
(face, crease edge) pair; only phi and phi_v vary.

Assembly is vectorized over triangles.  Each triangle owns a fixed-size
stencil: its 3 vertices, the opposite vertices across its 3 edges (the
own vertex repeated as a padding slot on boundary edges), and up to 3
virtual fold angles.  The analytic element gradient is exact; the element
tangent is a forward difference of that gradient, symmetrized, which
keeps Newton consistent without hand-deriving second derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DofLengthMismatch, OppositeNormals, SingularReference
from .mesh import EDGE_BOUNDARY, EDGE_CREASE, EDGE_INTERIOR, dof_layout

_I2 = np.eye(2)


def _cross(a, b):
    """Row-wise cross product without numpy.cross's axis shuffling."""
    c = np.empty(np.broadcast(a, b).shape)
    c[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    c[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    c[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return c


@dataclass(frozen=True)
class MaterialParams:
    """St. Venant-Kirchhoff shell material.

    E: Young's modulus, nu: Poisson ratio, h: thickness,
    rho: volumetric density (mass enters as rho * h per unit area).
    """

    E: float
    nu: float
    h: float
    rho: float = 0.0

    def __post_init__(self):
        if self.E <= 0:
            raise ValueError("E must be positive")
        if not (-1.0 < self.nu < 0.5):
            raise ValueError("nu must lie in (-1, 0.5)")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")


def sv_norm(strain, E, nu):
    """St. Venant-Kirchhoff quadratic energy density of a 2x2 strain.

    (E nu / (2 (1 - nu^2))) Tr^2(eps) + (E / (2 (1 + nu))) Tr(eps^2),
    where Tr(eps^2) is the trace of the matrix square.
    """
    strain = np.asarray(strain, dtype=np.float64)
    tr = strain[..., 0, 0] + strain[..., 1, 1]
    tr2 = np.einsum("...ij,...ji->...", strain, strain)
    c1 = E * nu / (2.0 * (1.0 - nu * nu))
    c2 = E / (2.0 * (1.0 + nu))
    return c1 * tr * tr + c2 * tr2


def membrane_strain(A, A_ref):
    """Discrete Green-Lagrange analogue: Aref^-1 A - I."""
    A_ref = np.asarray(A_ref, dtype=np.float64)
    det = A_ref[..., 0, 0] * A_ref[..., 1, 1] - A_ref[..., 0, 1] * A_ref[..., 1, 0]
    if np.any(np.abs(det) < 1e-300):
        raise SingularReference("reference first form is singular")
    inv = _inv2(A_ref)
    return inv @ np.asarray(A, dtype=np.float64) - _I2


def bending_strain(B, B_ref, A_ref):
    """Curvature change measure: Aref^-1 (B - Bref)."""
    A_ref = np.asarray(A_ref, dtype=np.float64)
    det = A_ref[..., 0, 0] * A_ref[..., 1, 1] - A_ref[..., 0, 1] * A_ref[..., 1, 0]
    if np.any(np.abs(det) < 1e-300):
        raise SingularReference("reference first form is singular")
    return _inv2(A_ref) @ (np.asarray(B, dtype=np.float64) - np.asarray(B_ref))


def _inv2(M):
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 1, 1] = M[..., 0, 0]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    return out / det[..., None, None]


@dataclass
class EnergyBreakdown:
    stretch: float
    bend: float
    rotation: float
    external: float = 0.0

    @property
    def total(self):
        return self.stretch + self.bend + self.rotation + self.external


@dataclass
class TangentSystem:
    gradient: np.ndarray
    tangent: sp.csr_matrix


def resolve_materials(mesh, materials):
    """Per-triangle (E, nu, h, rho) arrays from a MaterialParams or a dict.

    A dict must carry a "default" entry; other keys name face groups.
    """
    if isinstance(materials, MaterialParams):
        table = {"default": materials}
    else:
        table = dict(materials)
        if "default" not in table:
            raise ValueError('materials dict needs a "default" entry')
    nt = mesh.n_triangles
    E = np.full(nt, table["default"].E)
    nu = np.full(nt, table["default"].nu)
    h = np.full(nt, table["default"].h)
    rho = np.full(nt, table["default"].rho)
    for name, mat in table.items():
        if name == "default":
            continue
        faces = mesh.face_groups[name]
        E[faces], nu[faces], h[faces], rho[faces] = mat.E, mat.nu, mat.h, mat.rho
    return E, nu, h, rho


class ElasticModel:
    """Assembles Pi(q), its gradient, and a symmetric tangent.

    Parameters
    ----------
    mesh, creases : TriMesh, CreaseSet
    materials : MaterialParams or dict resolved by :func:`resolve_materials`
    include_crease_bending : bool
        Disables the additional bending coupling (used for diagnostics;
        physical runs keep it on).
    """

    def __init__(self, mesh, creases, materials, include_crease_bending=True,
                 fd_step_scale=1e-7):
        self.mesh = mesh
        self.creases = creases
        self.dof = dof_layout(mesh, creases)
        self.include_crease_bending = include_crease_bending
        self.E_tri, self.nu_tri, self.h_tri, self.rho_tri = \
            resolve_materials(mesh, materials)
        self._c1 = self.E_tri * self.nu_tri / (2.0 * (1.0 - self.nu_tri ** 2))
        self._c2 = self.E_tri / (2.0 * (1.0 + self.nu_tri))

        nt = mesh.n_triangles
        tri = mesh.triangles
        opp = np.empty((nt, 3), dtype=np.int64)
        m_avg = np.zeros((nt, 3))
        m_cre = np.zeros((nt, 3))
        cre_slot = np.zeros((nt, 3), dtype=np.int64)
        edge_to_seg = {int(e): s for s, e in enumerate(creases.edge)}
        for t in range(nt):
            for a in range(3):
                e = mesh.tri_edges[t, a]
                flag = mesh.edge_flags[e]
                if flag == EDGE_BOUNDARY:
                    opp[t, a] = tri[t, a]
                    continue
                f0, f1 = mesh.edge_faces[e]
                other = f1 if f0 == t else f0
                a_other = int(np.nonzero(mesh.tri_edges[other] == e)[0][0])
                opp[t, a] = tri[other, a_other]
                if flag == EDGE_INTERIOR:
                    m_avg[t, a] = 1.0
                else:
                    m_cre[t, a] = 1.0
                    cre_slot[t, a] = edge_to_seg[int(e)]
        self._opp = opp
        self._m_avg = m_avg
        self._m_cre = m_cre
        self._cre_slot = cre_slot
        self._stencil = np.hstack([tri, opp])                       # (Nt, 6)

        ref = mesh.vertices
        Xref = ref[self._stencil]
        d1 = Xref[:, 1] - Xref[:, 0]
        d2 = Xref[:, 2] - Xref[:, 0]
        Aref = np.empty((nt, 2, 2))
        Aref[:, 0, 0] = np.sum(d1 * d1, axis=1)
        Aref[:, 0, 1] = Aref[:, 1, 0] = np.sum(d1 * d2, axis=1)
        Aref[:, 1, 1] = np.sum(d2 * d2, axis=1)
        det = Aref[:, 0, 0] * Aref[:, 1, 1] - Aref[:, 0, 1] * Aref[:, 1, 0]
        if np.any(det <= 0):
            raise SingularReference("degenerate reference triangle")
        self._Aref = Aref
        self._Ainv = _inv2(Aref)
        self._wref = np.sqrt(det)

        # constant crease tensors: S = outer(w, w) / (a/2) in the face basis,
        # w_c = e* . d_c, from the reference configuration
        MinvS = np.zeros((nt, 3, 2, 2))
        for s in range(creases.n_segments):
            e = creases.edge[s]
            lo, hi = mesh.edges[e]
            ev = ref[hi] - ref[lo]
            eh = ev / np.linalg.norm(ev)
            for f in creases.faces[s]:
                a = int(np.nonzero(mesh.tri_edges[f] == e)[0][0])
                o = tri[f, a]
                wv = (ref[o] - ref[lo]) - np.dot(ref[o] - ref[lo], eh) * eh
                alt = np.linalg.norm(wv)
                estar = wv / alt
                df1 = ref[tri[f, 1]] - ref[tri[f, 0]]
                df2 = ref[tri[f, 2]] - ref[tri[f, 0]]
                w2 = np.array([np.dot(estar, df1), np.dot(estar, df2)])
                MinvS[f, a] = self._Ainv[f] @ np.outer(w2, w2) / (0.5 * alt)
        self._MinvS = MinvS

        # reference second form (mid-edge normals of the reference state)
        _, B0, _ = self._forms(ref[self._stencil])
        self._Bref = B0

        # crease rest data
        self.rot_k = creases.stiffness * creases.ref_length
        self.rest_angle = creases.rest_angle.copy()

        # canonical crease dihedral stencils (lo, hi, oppT1, oppT2)
        pts = np.zeros((creases.n_segments, 4), dtype=np.int64)
        for s in range(creases.n_segments):
            e = creases.edge[s]
            lo, hi = mesh.edges[e]
            f0, f1 = mesh.edge_faces[e]
            a0 = int(np.nonzero(mesh.tri_edges[f0] == e)[0][0])
            a1 = int(np.nonzero(mesh.tri_edges[f1] == e)[0][0])
            pts[s] = (lo, hi, tri[f0, a0], tri[f1, a1])
        self._seg_pts = pts

        # global scatter indices
        n1 = mesh.n_vertices
        self._vert_dofs = (3 * self._stencil[:, :, None]
                           + np.arange(3)[None, None, :]).reshape(nt, 18)
        ang = 3 * n1 + np.where(m_cre > 0, cre_slot, 0)
        if creases.n_segments == 0:
            ang = np.zeros_like(ang)
        self._ang_dofs = ang
        self._elem_dofs = np.hstack([self._vert_dofs, ang]).astype(np.int64)
        self._K_rows = np.repeat(self._elem_dofs, 21, axis=1).ravel()
        self._K_cols = np.tile(self._elem_dofs, (1, 21)).ravel()

        self._scale = mesh.bbox_scale() or 1.0
        self._fd_step = fd_step_scale * self._scale
        self._tiles = {1: (self._m_avg, self._m_cre, self._Ainv, self._Bref,
                           self._MinvS, self.h_tri, self._c1, self._c2,
                           self._wref)}

    def _tiled(self, rep):
        """Per-triangle caches tiled ``rep`` times along the batch axis.

        Lets one vectorized gradient call evaluate many perturbed copies of
        every element at once (the tangent assembly stacks all 21 stencil
        perturbations into a single batch).
        """
        if rep not in self._tiles:
            base = self._tiles[1]
            self._tiles[rep] = tuple(
                np.tile(a, (rep,) + (1,) * (a.ndim - 1)) for a in base)
        return self._tiles[rep]

    # --- state helpers -------------------------------------------------

    def rest_angles_measured(self):
        """Mesh dihedral of every crease segment in the reference state."""
        return self.crease_dihedrals(self.mesh.vertices)

    def rest_state(self):
        """DOF vector of the reference configuration with phi_v = phi."""
        return self.dof.join(self.mesh.vertices, self.rest_angles_measured())

    def crease_dihedrals(self, positions):
        if self.creases.n_segments == 0:
            return np.zeros(0)
        from .geometry import dihedral_angle
        p = np.asarray(positions).reshape(-1, 3)
        s = self._seg_pts
        return dihedral_angle(p[s[:, 0]], p[s[:, 1]], p[s[:, 2]], p[s[:, 3]])

    def _check_q(self, q):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dof.total,):
            raise DofLengthMismatch(
                f"expected {self.dof.total} DOFs, got {q.shape}")
        return q

    def _gather(self, q):
        pos, ang = self.dof.split(q)
        X = pos[self._stencil]
        if self.creases.n_segments:
            PHIV = ang[self._cre_slot] * self._m_cre
        else:
            PHIV = np.zeros((self.mesh.n_triangles, 3))
        return X, PHIV, ang

    # --- forward kinematics of one element batch -----------------------

    def _forms(self, X, check=True):
        """First form, second form, and crease dihedrals for local coords X.

        X: (Nt, 6, 3) stacked [vi, vj, vk, w0, w1, w2].  Returns
        (A (Nt,2,2), B (Nt,2,2), phi (Nt,3)).
        """
        d1 = X[:, 1] - X[:, 0]
        d2 = X[:, 2] - X[:, 0]
        A = np.empty((X.shape[0], 2, 2))
        A[:, 0, 0] = np.sum(d1 * d1, axis=1)
        A[:, 0, 1] = A[:, 1, 0] = np.sum(d1 * d2, axis=1)
        A[:, 1, 1] = np.sum(d2 * d2, axis=1)

        c_own = _cross(d1, d2)
        cn = np.linalg.norm(c_own, axis=1)
        n_own = c_own / cn[:, None]

        n_mid = np.empty((X.shape[0], 3, 3))
        phi = np.zeros((X.shape[0], 3))
        for a in range(3):
            P = X[:, (a + 1) % 3]
            Q = X[:, (a + 2) % 3]
            W = X[:, 3 + a]
            c_nb = _cross(P - Q, W - Q)
            cbn = np.linalg.norm(c_nb, axis=1)
            cbn_safe = np.maximum(cbn, 1e-300)
            n_nb = c_nb / cbn_safe[:, None]
            msum = n_own + n_nb
            mn = np.linalg.norm(msum, axis=1)
            use_avg = self._m_avg[:, a] > 0
            if check and np.any(use_avg & (mn < 1e-8)):
                raise OppositeNormals("interior edge folded to dihedral pi")
            mn_safe = np.maximum(mn, 1e-300)
            n_mid[:, a] = np.where(use_avg[:, None],
                                   msum / mn_safe[:, None], n_own)
            # canonical signed dihedral, identical from both faces
            e = Q - P
            el = np.linalg.norm(e, axis=1)
            eh = e / np.maximum(el, 1e-300)[:, None]
            sarg = np.sum(_cross(n_nb, n_own) * eh, axis=1)
            carg = np.sum(n_own * n_nb, axis=1)
            phi[:, a] = np.arctan2(sarg, carg)

        dn1 = n_mid[:, 1] - n_mid[:, 0]
        dn2 = n_mid[:, 2] - n_mid[:, 0]
        B = np.empty((X.shape[0], 2, 2))
        B[:, 0, 0] = 2.0 * np.sum(dn1 * d1, axis=1)
        B[:, 0, 1] = 2.0 * np.sum(dn1 * d2, axis=1)
        B[:, 1, 0] = 2.0 * np.sum(dn2 * d1, axis=1)
        B[:, 1, 1] = 2.0 * np.sum(dn2 * d2, axis=1)
        return A, B, phi

    def _element_energy(self, X, PHIV):
        A, B, phi = self._forms(X)
        eps = self._Ainv @ A - _I2
        kap = self._Ainv @ (B - self._Bref)
        if self.include_crease_bending and self.creases.n_segments:
            s = np.sin(0.5 * (phi - PHIV)) * self._m_cre
            kap = kap + np.einsum("ta,tapq->tpq", s, self._MinvS)
        sv_e = self._sv(eps)
        sv_k = self._sv(kap)
        return self._wref * (self.h_tri / 8.0 * sv_e
                             + self.h_tri ** 3 / 24.0 * sv_k)

    def _sv(self, M):
        tr = M[:, 0, 0] + M[:, 1, 1]
        tr2 = np.einsum("tij,tji->t", M, M)
        return self._c1 * tr * tr + self._c2 * tr2

    def _sv_grad(self, M):
        tr = (M[:, 0, 0] + M[:, 1, 1])[:, None, None]
        return 2.0 * self._c1[:, None, None] * tr * _I2 \
            + 2.0 * self._c2[:, None, None] * M.transpose(0, 2, 1)

    @staticmethod
    def _sv_grad_c(M, c1, c2):
        tr = (M[:, 0, 0] + M[:, 1, 1])[:, None, None]
        return 2.0 * c1[:, None, None] * tr * _I2 \
            + 2.0 * c2[:, None, None] * M.transpose(0, 2, 1)

    def _element_gradient(self, X, PHIV):
        """Analytic d(element energy)/d(X, PHIV): ((Nt,6,3), (Nt,3)).

        Accepts stacked batches whose leading dimension is a multiple of
        the triangle count; cached per-element data is tiled to match.
        """
        nt = X.shape[0]
        rep = nt // self.mesh.n_triangles if self.mesh.n_triangles else 1
        (m_avg, m_cre, Ainv, Bref, MinvS, h_tri, c1, c2, wref) = \
            self._tiled(max(rep, 1))
        d1 = X[:, 1] - X[:, 0]
        d2 = X[:, 2] - X[:, 0]
        A = np.empty((nt, 2, 2))
        A[:, 0, 0] = np.sum(d1 * d1, axis=1)
        A[:, 0, 1] = A[:, 1, 0] = np.sum(d1 * d2, axis=1)
        A[:, 1, 1] = np.sum(d2 * d2, axis=1)

        c_own = _cross(d1, d2)
        cn = np.linalg.norm(c_own, axis=1)
        n_own = c_own / cn[:, None]

        # forward pass, keeping intermediates per edge
        n_mid = np.empty((nt, 3, 3))
        n_nb = np.empty((nt, 3, 3))
        cbn = np.empty((nt, 3))
        msum_norm = np.empty((nt, 3))
        phi = np.zeros((nt, 3))
        for a in range(3):
            P = X[:, (a + 1) % 3]
            Q = X[:, (a + 2) % 3]
            W = X[:, 3 + a]
            c_nb = _cross(P - Q, W - Q)
            cbn[:, a] = np.maximum(np.linalg.norm(c_nb, axis=1), 1e-300)
            n_nb[:, a] = c_nb / cbn[:, a, None]
            msum = n_own + n_nb[:, a]
            mn = np.linalg.norm(msum, axis=1)
            use_avg = m_avg[:, a] > 0
            if np.any(use_avg & (mn < 1e-8)):
                raise OppositeNormals("interior edge folded to dihedral pi")
            mn = np.maximum(mn, 1e-300)
            msum_norm[:, a] = mn
            n_mid[:, a] = np.where(use_avg[:, None], msum / mn[:, None], n_own)
            e = Q - P
            el = np.maximum(np.linalg.norm(e, axis=1), 1e-300)
            eh = e / el[:, None]
            phi[:, a] = np.arctan2(np.sum(_cross(n_nb[:, a], n_own) * eh, axis=1),
                                   np.sum(n_own * n_nb[:, a], axis=1))

        dn1 = n_mid[:, 1] - n_mid[:, 0]
        dn2 = n_mid[:, 2] - n_mid[:, 0]
        B = np.empty((nt, 2, 2))
        B[:, 0, 0] = 2.0 * np.sum(dn1 * d1, axis=1)
        B[:, 0, 1] = 2.0 * np.sum(dn1 * d2, axis=1)
        B[:, 1, 0] = 2.0 * np.sum(dn2 * d1, axis=1)
        B[:, 1, 1] = 2.0 * np.sum(dn2 * d2, axis=1)

        eps = Ainv @ A - _I2
        kap = Ainv @ (B - Bref)
        use_crease = self.include_crease_bending and self.creases.n_segments
        if use_crease:
            s = np.sin(0.5 * (phi - PHIV)) * m_cre
            kap = kap + np.einsum("ta,tapq->tpq", s, MinvS)

        G_eps = self._sv_grad_c(eps, c1, c2)
        G_kap = self._sv_grad_c(kap, c1, c2)
        ws = (h_tri / 8.0 * wref)[:, None, None]
        wb = (h_tri ** 3 / 24.0 * wref)[:, None, None]
        P2 = ws * np.einsum("tji,tjk->tik", Ainv, G_eps)   # dU/dA
        Q2 = wb * np.einsum("tji,tjk->tik", Ainv, G_kap)   # dU/dB

        GV = np.zeros((nt, 6, 3))
        GP = np.zeros((nt, 3))

        # metric part
        gd1 = 2.0 * P2[:, 0, 0, None] * d1 + (P2[:, 0, 1] + P2[:, 1, 0])[:, None] * d2
        gd2 = 2.0 * P2[:, 1, 1, None] * d2 + (P2[:, 0, 1] + P2[:, 1, 0])[:, None] * d1
        # second-form edge-vector part
        gd1 += 2.0 * (Q2[:, 0, 0, None] * dn1 + Q2[:, 1, 0, None] * dn2)
        gd2 += 2.0 * (Q2[:, 0, 1, None] * dn1 + Q2[:, 1, 1, None] * dn2)
        GV[:, 1] += gd1
        GV[:, 2] += gd2
        GV[:, 0] -= gd1 + gd2

        # coefficients on the mid-edge normals
        g_n = np.empty((nt, 3, 3))
        g_n[:, 1] = 2.0 * (Q2[:, 0, 0, None] * d1 + Q2[:, 0, 1, None] * d2)
        g_n[:, 2] = 2.0 * (Q2[:, 1, 0, None] * d1 + Q2[:, 1, 1, None] * d2)
        g_n[:, 0] = -(g_n[:, 1] + g_n[:, 2])

        y_own = np.zeros((nt, 3))  # coefficient on d(n_own)
        for a in range(3):
            y = g_n[:, a]
            avg = m_avg[:, a, None]
            # averaged: back through normalize(n_own + n_nb)
            nm = n_mid[:, a]
            y_m = (y - nm * np.sum(nm * y, axis=1, keepdims=True)) \
                / msum_norm[:, a, None]
            y_own += np.where(avg > 0, y_m, y)
            y_nb = np.where(avg > 0, y_m, 0.0)

            if use_crease:
                cosf = 0.5 * np.cos(0.5 * (phi[:, a] - PHIV[:, a]))
                dUds = wb[:, 0, 0] * np.einsum(
                    "tij,tij->t", G_kap, MinvS[:, a])
                g_phi = dUds * cosf * m_cre[:, a]
                GP[:, a] = -g_phi
            else:
                g_phi = np.zeros(nt)

            need_nb = np.any(avg > 0) or use_crease
            if not need_nb and not np.any(g_phi):
                continue

            P = X[:, (a + 1) % 3]
            Q = X[:, (a + 2) % 3]
            W = X[:, 3 + a]
            # neighbor-normal chain (averaging only)
            yc = (y_nb - n_nb[:, a] * np.sum(n_nb[:, a] * y_nb, axis=1,
                                             keepdims=True)) / cbn[:, a, None]
            u = P - Q
            v = W - Q
            tP = _cross(v, yc)
            tW = _cross(yc, u)
            GV[:, (a + 1) % 3] += tP
            GV[:, 3 + a] += tW
            GV[:, (a + 2) % 3] -= tP + tW

            if use_crease and np.any(g_phi):
                from .geometry import d_dihedral
                g4 = d_dihedral(P, Q, X[:, a], W)      # (Nt, 4, 3)
                g4 = g4 * g_phi[:, None, None]
                GV[:, (a + 1) % 3] += g4[:, 0]
                GV[:, (a + 2) % 3] += g4[:, 1]
                GV[:, a] += g4[:, 2]
                GV[:, 3 + a] += g4[:, 3]

        # own face-normal chain
        yc = (y_own - n_own * np.sum(n_own * y_own, axis=1, keepdims=True)) \
            / cn[:, None]
        t1 = _cross(d2, yc)
        t2 = _cross(yc, d1)
        GV[:, 1] += t1
        GV[:, 2] += t2
        GV[:, 0] -= t1 + t2
        return GV, GP

    # --- public assembly ------------------------------------------------

    def energy_breakdown(self, q):
        q = self._check_q(q)
        X, PHIV, ang = self._gather(q)
        A, B, phi = self._forms(X)
        eps = self._Ainv @ A - _I2
        kap = self._Ainv @ (B - self._Bref)
        if self.include_crease_bending and self.creases.n_segments:
            s = np.sin(0.5 * (phi - PHIV)) * self._m_cre
            kap = kap + np.einsum("ta,tapq->tpq", s, self._MinvS)
        stretch = float(np.sum(self._wref * self.h_tri / 8.0 * self._sv(eps)))
        bend = float(np.sum(self._wref * self.h_tri ** 3 / 24.0 * self._sv(kap)))
        rot = float(np.sum(0.5 * self.rot_k * (ang - self.rest_angle) ** 2))
        return EnergyBreakdown(stretch=stretch, bend=bend, rotation=rot)

    def total_energy(self, q):
        return self.energy_breakdown(q).total

    def gradient(self, q):
        q = self._check_q(q)
        X, PHIV, ang = self._gather(q)
        GV, GP = self._element_gradient(X, PHIV)
        out = np.zeros(self.dof.total)
        np.add.at(out, self._vert_dofs.ravel(), GV.reshape(-1))
        if self.creases.n_segments:
            np.add.at(out, self._ang_dofs.ravel(), GP.ravel())
            n1 = 3 * self.mesh.n_vertices
            out[n1:] += self.rot_k * (ang - self.rest_angle)
        return out

    def tangent(self, q):
        q = self._check_q(q)
        X, PHIV, ang = self._gather(q)
        nt = self.mesh.n_triangles
        h = self._fd_step
        # all 21 stencil perturbations plus the base state in one batch
        Xbig = np.tile(X, (22, 1, 1))
        Pbig = np.tile(PHIV, (22, 1))
        for m in range(18):
            s, ax = divmod(m, 3)
            Xbig[m * nt:(m + 1) * nt, s, ax] += h
        for m in range(3):
            Pbig[(18 + m) * nt:(19 + m) * nt, m] += h
        GVb, GPb = self._element_gradient(Xbig, Pbig)
        gb = np.concatenate([GVb.reshape(22 * nt, 18), GPb], axis=1)
        gb = gb.reshape(22, nt, 21)
        H = (gb[:21] - gb[21][None]) / h
        H = np.ascontiguousarray(H.transpose(1, 2, 0))   # (nt, row, col)
        H = 0.5 * (H + H.transpose(0, 2, 1))

        K = sp.coo_matrix((H.ravel(), (self._K_rows, self._K_cols)),
                          shape=(self.dof.total, self.dof.total)).tocsr()
        if self.creases.n_segments:
            n1 = 3 * self.mesh.n_vertices
            diag = np.zeros(self.dof.total)
            diag[n1:] = self.rot_k
            K = K + sp.diags(diag)
        return K

    def gradient_and_tangent(self, q):
        return TangentSystem(gradient=self.gradient(q), tangent=self.tangent(q))
