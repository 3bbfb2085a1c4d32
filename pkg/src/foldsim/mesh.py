"""Triangle mesh topology, crease bookkeeping, and DOF layout.

A model is a triangulated shell with an optional set of crease segments.
Vertices are shared across crease lines (C0 continuity comes for free);
crease edges are treated like boundary edges when mid-edge normals are
averaged, so plain shell bending never acts across a crease.  All coupling
across a crease goes through the crease elements (see ``energy``).

Generalized coordinates: 3 translations per vertex followed by one virtual
fold angle per crease segment, ``3*N1 + N2`` in total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateTriangle,
    EdgeAlreadyCrease,
    EdgeNotFound,
    InconsistentOrientation,
    NonManifoldEdge,
    NonPositiveDensity,
)

EDGE_INTERIOR = 0
EDGE_BOUNDARY = 1
EDGE_CREASE = 2


class TriMesh:
    """Validated triangle mesh with full edge topology.

    Attributes
    ----------
    vertices : (N1, 3) float array
        Reference vertex positions.
    triangles : (Nt, 3) int array
        Counter-clockwise vertex index triples.
    edges : (Ne, 2) int array
        Unique vertex pairs, each row sorted low < high.
    edge_faces : (Ne, 2) int array
        Adjacent face indices; column 0 is the face that traverses the
        edge in its low->high direction, column 1 is the other face or -1
        on the boundary.
    edge_flags : (Ne,) uint8 array
        One of EDGE_INTERIOR, EDGE_BOUNDARY, EDGE_CREASE.
    tri_edges : (Nt, 3) int array
        Edge index opposite each local vertex of each triangle.
    vertex_groups, edge_groups, face_groups : dict[str, int array]
        Named index sets attached by the pattern generators so scenarios
        can reference boundary conditions, probes, and materials.

    The mesh is immutable after construction except for crease flagging,
    which happens once through :func:`mark_creases`.
    """

    def __init__(self, vertices, triangles, edges, edge_faces, edge_flags,
                 tri_edges, edge_lookup):
        self.vertices = vertices
        self.triangles = triangles
        self.edges = edges
        self.edge_faces = edge_faces
        self.edge_flags = edge_flags
        self.tri_edges = tri_edges
        self._edge_lookup = edge_lookup
        self.vertex_groups: dict[str, np.ndarray] = {}
        self.edge_groups: dict[str, np.ndarray] = {}
        self.face_groups: dict[str, np.ndarray] = {}

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def edge_index(self, a, b):
        """Edge id for the unordered vertex pair (a, b).

        Raises EdgeNotFound if no such edge exists.
        """
        key = (a, b) if a < b else (b, a)
        try:
            return self._edge_lookup[key]
        except KeyError:
            raise EdgeNotFound(f"no edge between vertices {a} and {b}") from None

    def triangle_areas(self, positions=None):
        p = self.vertices if positions is None else positions
        t = self.triangles
        c = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
        return 0.5 * np.linalg.norm(c, axis=1)

    def mean_edge_length(self, positions=None):
        p = self.vertices if positions is None else positions
        d = p[self.edges[:, 1]] - p[self.edges[:, 0]]
        return float(np.mean(np.linalg.norm(d, axis=1)))

    def bbox_scale(self, positions=None):
        p = self.vertices if positions is None else positions
        return float(np.max(p.max(axis=0) - p.min(axis=0)))


@dataclass
class CreaseSet:
    """Per-segment crease data.

    ``edge``, ``faces`` index into the owning mesh; ``dof_index`` gives each
    segment's slot in the generalized coordinate vector (contiguous in
    ``[3*N1, 3*N1 + N2)``).  ``stiffness`` is the rotational stiffness
    density K_r (moment per unit length per radian) and ``rest_angle`` the
    rest dihedral in (-pi, pi).
    """

    edge: np.ndarray
    faces: np.ndarray
    stiffness: np.ndarray
    rest_angle: np.ndarray
    ref_length: np.ndarray
    polyline: np.ndarray
    groups: dict = field(default_factory=dict)

    @property
    def n_segments(self):
        return int(self.edge.shape[0])

    @property
    def dof_index(self):
        return np.arange(self.n_segments)

    def segment_vertices(self, mesh):
        return mesh.edges[self.edge]

    @staticmethod
    def empty():
        return CreaseSet(
            edge=np.zeros(0, dtype=np.int64),
            faces=np.zeros((0, 2), dtype=np.int64),
            stiffness=np.zeros(0),
            rest_angle=np.zeros(0),
            ref_length=np.zeros(0),
            polyline=np.zeros(0, dtype=np.int64),
        )


@dataclass(frozen=True)
class DofMap:
    """Layout of the generalized coordinate vector q = [vertices | angles]."""

    n_vertices: int
    n_creases: int

    @property
    def total(self):
        return 3 * self.n_vertices + self.n_creases

    def vertex_slice(self, a):
        return slice(3 * a, 3 * a + 3)

    def vertex_dof(self, a, axis):
        return 3 * a + axis

    def crease_dof(self, segment):
        return 3 * self.n_vertices + segment

    def split(self, q):
        """Return (positions (N1,3), angles (N2,)) views of a DOF vector."""
        nv = 3 * self.n_vertices
        return q[:nv].reshape(self.n_vertices, 3), q[nv:]

    def join(self, positions, angles):
        return np.concatenate([np.asarray(positions).ravel(),
                               np.asarray(angles).ravel()])


def build_mesh(vertices, triangles):
    """Build a validated TriMesh from raw vertices and triangle triples.

    Checks index ranges, rejects degenerate triangles (area below
    1e-12 x bbox_scale^2), and requires every edge to carry one or two
    faces with globally consistent orientation.  Crease flags start unset.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ValueError("vertices must be (N, 3)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise ValueError("triangles must be (Nt, 3)")
    n = vertices.shape[0]
    if triangles.size and (triangles.min() < 0 or triangles.max() >= n):
        raise IndexError("triangle vertex index out of range")
    for t, (i, j, k) in enumerate(triangles):
        if i == j or j == k or i == k:
            raise DegenerateTriangle(f"triangle {t} repeats a vertex")

    scale = float(np.max(vertices.max(axis=0) - vertices.min(axis=0))) if n else 1.0
    if scale == 0.0:
        scale = 1.0
    cross = np.cross(vertices[triangles[:, 1]] - vertices[triangles[:, 0]],
                     vertices[triangles[:, 2]] - vertices[triangles[:, 0]])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    bad = np.nonzero(areas < 1e-12 * scale * scale)[0]
    if bad.size:
        raise DegenerateTriangle(f"triangle {bad[0]} has near-zero area")

    edge_lookup: dict[tuple, int] = {}
    edge_rows = []
    edge_faces = []
    directed_seen = {}
    # local edge a is opposite local vertex a: (j,k), (k,i), (i,j)
    tri_edges = np.empty_like(triangles)
    for t, (i, j, k) in enumerate(triangles):
        for a, (u, v) in enumerate(((j, k), (k, i), (i, j))):
            key = (u, v) if u < v else (v, u)
            if key not in edge_lookup:
                edge_lookup[key] = len(edge_rows)
                edge_rows.append(key)
                edge_faces.append([-1, -1])
            e = edge_lookup[key]
            tri_edges[t, a] = e
            fwd = (u, v) == key  # face traverses edge in low->high order
            slot = 0 if fwd else 1
            if (u, v) in directed_seen:
                if edge_faces[e][0] != -1 and edge_faces[e][1] != -1:
                    raise NonManifoldEdge(
                        f"edge {key} has more than two faces")
                other = edge_faces[e][0] if slot == 0 else edge_faces[e][1]
                raise InconsistentOrientation(
                    f"directed edge {u}->{v} appears in faces {other} and {t}")
            directed_seen[(u, v)] = t
            if edge_faces[e][slot] != -1:
                raise NonManifoldEdge(f"edge {key} has more than two faces")
            edge_faces[e][slot] = t

    edges = np.array(edge_rows, dtype=np.int64).reshape(-1, 2)
    edge_faces = np.array(edge_faces, dtype=np.int64).reshape(-1, 2)
    for e in range(edges.shape[0]):
        f0, f1 = edge_faces[e]
        if f0 == -1 and f1 == -1:
            raise NonManifoldEdge(f"edge {tuple(edges[e])} has no face")

    # normalize boundary edges so the single face sits in column 0
    swap = edge_faces[:, 0] == -1
    edge_faces[swap] = edge_faces[swap][:, ::-1]
    boundary = edge_faces[:, 1] == -1
    edge_flags = np.where(boundary, EDGE_BOUNDARY, EDGE_INTERIOR).astype(np.uint8)

    return TriMesh(vertices, triangles, edges, edge_faces, edge_flags,
                   tri_edges, edge_lookup)


def _broadcast_per_polyline(value, n_polylines, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n_polylines, float(arr))
    if arr.shape != (n_polylines,):
        raise ValueError(f"{name} must be a scalar or one value per polyline")
    return arr


def mark_creases(mesh, polylines, stiffness, rest_angle, existing=None,
                 group=None):
    """Flag the edges of the given vertex chains as creases.

    Parameters
    ----------
    polylines : sequence of vertex index chains
        Consecutive pairs must be existing interior edges.
    stiffness, rest_angle : float or per-polyline sequence
        Rotational stiffness density K_r and rest dihedral phi0.
    existing : CreaseSet, optional
        Segments already marked; the result appends to them so DOF indices
        stay contiguous in marking order.
    group : str, optional
        Name under which the new segments are recorded in ``groups``.

    Re-marking an edge raises EdgeAlreadyCrease.  Returns the combined
    CreaseSet; ``mesh.edge_flags`` is updated in place (construction-time
    mutation -- the mesh is immutable afterwards).
    """
    chains = [list(c) for c in polylines]
    kr = _broadcast_per_polyline(stiffness, len(chains), "stiffness")
    phi0 = _broadcast_per_polyline(rest_angle, len(chains), "rest_angle")

    base = existing if existing is not None else CreaseSet.empty()
    edge_ids, faces, seg_kr, seg_phi0, seg_len, seg_poly = [], [], [], [], [], []
    poly_offset = int(base.polyline.max()) + 1 if base.n_segments else 0
    taken = set(base.edge.tolist())
    for p, chain in enumerate(chains):
        if len(chain) < 2:
            raise ValueError("polyline needs at least two vertices")
        for a, b in zip(chain[:-1], chain[1:]):
            e = mesh.edge_index(a, b)
            if mesh.edge_flags[e] == EDGE_BOUNDARY:
                raise EdgeNotFound(
                    f"edge ({a},{b}) is a boundary edge, not interior")
            if mesh.edge_flags[e] == EDGE_CREASE or e in taken:
                raise EdgeAlreadyCrease(f"edge ({a},{b}) already marked")
            taken.add(e)
            edge_ids.append(e)
            faces.append(mesh.edge_faces[e])
            seg_kr.append(kr[p])
            seg_phi0.append(phi0[p])
            seg_len.append(np.linalg.norm(mesh.vertices[b] - mesh.vertices[a]))
            seg_poly.append(poly_offset + p)

    if np.any(np.asarray(seg_kr) < 0):
        raise ValueError("crease stiffness must be >= 0")
    if np.any(np.abs(seg_phi0) >= np.pi):
        raise ValueError("rest angle must lie in (-pi, pi)")

    mesh.edge_flags[np.asarray(edge_ids, dtype=np.int64)] = EDGE_CREASE
    combined = CreaseSet(
        edge=np.concatenate([base.edge, np.asarray(edge_ids, dtype=np.int64)]),
        faces=np.concatenate([base.faces,
                              np.asarray(faces, dtype=np.int64).reshape(-1, 2)]),
        stiffness=np.concatenate([base.stiffness, np.asarray(seg_kr)]),
        rest_angle=np.concatenate([base.rest_angle, np.asarray(seg_phi0)]),
        ref_length=np.concatenate([base.ref_length, np.asarray(seg_len)]),
        polyline=np.concatenate([base.polyline,
                                 np.asarray(seg_poly, dtype=np.int64)]),
        groups=dict(base.groups),
    )
    if group is not None:
        new_ids = np.arange(base.n_segments, combined.n_segments)
        if group in combined.groups:
            new_ids = np.concatenate([combined.groups[group], new_ids])
        combined.groups[group] = new_ids
    return combined


def dof_layout(mesh, creases):
    """DofMap for a mesh plus crease set (3*N1 + N2 slots)."""
    return DofMap(n_vertices=mesh.n_vertices, n_creases=creases.n_segments)


def lumped_mass(mesh, creases, params, crease_inertia=None):
    """Lumped mass vector over all 3*N1 + N2 degrees of freedom.

    Each vertex receives rho*h times one third of its incident triangle
    reference areas, repeated on all three axes.  Crease slots get the
    scalar ``crease_inertia``; when omitted it defaults to
    1e-6 * (mean vertex mass) * (mean edge length)^2, which regularizes
    dynamics without influencing statics.

    ``params`` is a MaterialParams-like object with ``rho`` and ``h``, or a
    per-triangle array of surface densities rho*h.
    """
    if hasattr(params, "rho"):
        rho_h = np.full(mesh.n_triangles, float(params.rho) * float(params.h))
        if float(params.rho) <= 0 or float(params.h) <= 0:
            raise NonPositiveDensity("rho and h must be positive")
    else:
        rho_h = np.asarray(params, dtype=np.float64)
        if rho_h.shape != (mesh.n_triangles,):
            raise ValueError("per-triangle density must have one entry per face")
        if np.any(rho_h <= 0):
            raise NonPositiveDensity("surface density must be positive")

    areas = mesh.triangle_areas()
    vmass = np.zeros(mesh.n_vertices)
    share = rho_h * areas / 3.0
    for local in range(3):
        np.add.at(vmass, mesh.triangles[:, local], share)

    if crease_inertia is None:
        crease_inertia = 1e-6 * float(vmass.mean()) * mesh.mean_edge_length() ** 2

    out = np.empty(3 * mesh.n_vertices + creases.n_segments)
    out[:3 * mesh.n_vertices] = np.repeat(vmass, 3)
    out[3 * mesh.n_vertices:] = crease_inertia
    return out


def export_obj(mesh, positions, path):
    """Write vertices and triangular faces as a Wavefront OBJ file."""
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    with open(path, "w", encoding="utf-8") as f:
        for v in p:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def export_crease_sidecar(mesh, creases, path):
    """Write the JSON sidecar listing crease segments next to an OBJ."""
    segs = []
    for s in range(creases.n_segments):
        a, b = mesh.edges[creases.edge[s]]
        segs.append({"edge": [int(a), int(b)],
                     "K_r": float(creases.stiffness[s]),
                     "phi0": float(creases.rest_angle[s])})
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"creases": segs}, f, indent=1)
