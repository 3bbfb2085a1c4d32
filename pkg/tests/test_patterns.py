import numpy as np
import pytest

from foldsim.energy import ElasticModel, MaterialParams
from foldsim.errors import InvalidSectorAngle, OutOfRange
from foldsim.mesh import EDGE_BOUNDARY, EDGE_CREASE, build_mesh
from foldsim.patterns import (
    gen_kresling,
    gen_miura,
    gen_single_fold,
    gen_waterbomb,
    kresling_conjugate_state,
    miura_poisson_WL,
    miura_nu_from_dihedral,
    miura_vertices,
)

MAT = MaterialParams(E=100.0, nu=0.3, h=0.05, rho=1.0)


def euler_characteristic(mesh):
    return mesh.n_vertices - mesh.n_edges + mesh.n_triangles


# --- single fold -------------------------------------------------------------

def test_single_fold_flat():
    mesh, creases = gen_single_fold(1.0, 1.0, 0.0, 2)
    assert np.abs(mesh.vertices[:, 2]).max() == 0.0
    np.testing.assert_allclose(creases.rest_angle, 0.0, atol=1e-14)


def test_single_fold_dihedral_matches_phi0():
    for phi0 in (np.deg2rad(35.6), -0.9, np.deg2rad(144.4)):
        mesh, creases = gen_single_fold(1.0, 1.0, phi0, 4)
        np.testing.assert_allclose(creases.rest_angle, phi0, atol=1e-12)


def test_single_fold_crease_length():
    mesh, creases = gen_single_fold(1.0, 0.7, 0.5, 5)
    assert creases.n_segments == 5
    assert abs(creases.ref_length.sum() - 0.7) < 1e-12
    assert euler_characteristic(mesh) == 1


# --- miura -------------------------------------------------------------------

def test_miura_rigidity_constraints():
    a, b, gamma, rho = 1.0, 1.2, np.pi / 3, 0.6
    P = miura_vertices(2, 2, a, b, gamma, rho)
    # all corrugation edges length b, all zigzag edges length a
    db = np.diff(P, axis=0)
    np.testing.assert_allclose(np.linalg.norm(db, axis=-1), b, rtol=1e-12)
    da = np.diff(P, axis=1)
    np.testing.assert_allclose(np.linalg.norm(da, axis=-1), a, rtol=1e-12)
    # facet planarity: parallelogram closure
    closure = P[1:, 1:] - P[:-1, 1:] - P[1:, :-1] + P[:-1, :-1]
    assert np.abs(closure).max() < 1e-12
    # sector angle preserved
    cosg = np.abs(np.sum(db[:, :-1] * da[:-1, :], axis=-1)) / (a * b)
    np.testing.assert_allclose(cosg, np.cos(gamma), rtol=1e-12)


def test_miura_flat_state_planar():
    mesh, creases = gen_miura(2, 2, rho=0.0)
    assert np.abs(mesh.vertices[:, 2]).max() == 0.0
    np.testing.assert_allclose(creases.rest_angle, 0.0, atol=1e-12)


def test_miura_generator_matches_oracle():
    m, n, a, b, gamma, rho = 2, 1, 1.0, 1.0, np.pi / 3, 0.5
    mesh, _ = gen_miura(m, n, a, b, gamma, rho)
    P = miura_vertices(m, n, a, b, gamma, rho).reshape(-1, 3)
    assert np.abs(mesh.vertices - P).max() < 1e-10


def test_miura_2x2_cell_centers_three_mountains_one_valley():
    # the four unit-cell centers are degree-4 crease vertices whose four
    # folds split 3 mountains / 1 valley
    mesh, creases = gen_miura(2, 2, rho=0.5)
    seg_v = creases.segment_vertices(mesh)
    idx = np.arange(mesh.n_vertices).reshape(5, 5)
    centers = [idx[i, j] for i in (1, 3) for j in (1, 3)]
    assert len(centers) == 4
    for c in centers:
        segs = np.nonzero(np.any(seg_v == c, axis=1))[0]
        assert len(segs) == 4
        signs = np.sign(creases.rest_angle[segs])
        counts = sorted(np.bincount((signs > 0).astype(int), minlength=2))
        assert counts == [1, 3]


def test_miura_rest_state_zero_energy():
    mesh, creases = gen_miura(2, 2, rho=0.5)
    model = ElasticModel(mesh, creases, MAT)
    assert model.total_energy(model.rest_state()) < 1e-18
    assert np.abs(model.gradient(model.rest_state())).max() < 1e-12


def test_miura_poisson_formulas():
    gamma = np.pi / 3
    # flat limit: -nu -> cot^2(gamma) = 1/3 at 60 degrees
    assert abs(-miura_poisson_WL(gamma, 1e-9) - 1.0 / 3.0) < 1e-6
    # the fold state where -nu_WL = 1.3: cos^2 rho = cos^2 g (1 + 1/1.3)
    rho = np.arccos(np.sqrt(0.25 + 0.25 / 1.3))
    assert abs(-miura_poisson_WL(gamma, rho) - 1.3) < 1e-12
    # dihedral-based evaluation agrees with the rho-based one
    mesh, creases = gen_miura(1, 1, 1.0, 1.0, gamma, rho)
    phi_L = creases.rest_angle[creases.groups["creases_L"]]
    got = miura_nu_from_dihedral(np.abs(phi_L).mean(), gamma)
    assert abs(got - (-miura_poisson_WL(gamma, rho))) < 1e-10


def test_miura_invalid_inputs():
    with pytest.raises(InvalidSectorAngle):
        gen_miura(1, 1, gamma=1.6, rho=0.1)
    with pytest.raises(OutOfRange):
        gen_miura(1, 1, gamma=1.0, rho=1.0)


# --- waterbomb -----------------------------------------------------------------

def test_waterbomb_flexible_four_creases():
    mesh, creases = gen_waterbomb("flexible4", n_div=6, rest_angle=-0.8)
    assert len(np.unique(creases.polyline)) == 4
    center = mesh.vertex_groups["center"][0]
    seg_v = creases.segment_vertices(mesh)
    assert np.sum(np.any(seg_v == center, axis=1)) == 4
    np.testing.assert_allclose(creases.rest_angle, -0.8)
    assert euler_characteristic(mesh) == 1


def test_waterbomb_flexible_flat_rest_is_zero_energy_when_phi0_zero():
    mesh, creases = gen_waterbomb("flexible4", n_div=4, rest_angle=0.0)
    model = ElasticModel(mesh, creases, MAT)
    q0 = model.rest_state()
    assert model.total_energy(q0) < 1e-20
    assert np.abs(model.gradient(q0)).max() < 1e-12


def test_waterbomb_rigid12():
    mesh, creases = gen_waterbomb("rigid12", size=1.0)
    assert creases.n_segments == 12
    assert len(np.unique(creases.polyline)) == 12
    # alternating mountain / valley rest angles around the vertex
    signs = np.sign(creases.rest_angle)
    assert np.all(signs[::2] == signs[0])
    assert np.all(signs[1::2] == -signs[0])
    # corners rest on the ground plane
    corners = mesh.vertex_groups["corners"]
    np.testing.assert_allclose(mesh.vertices[corners, 2], 0.0, atol=1e-12)
    # sectors stay isometric to the flat hexagon
    center = mesh.vertices[0]
    ring = mesh.vertices[mesh.vertex_groups["rim"]]
    d = np.linalg.norm(ring - center, axis=1)
    np.testing.assert_allclose(d[::2], 1.0, rtol=1e-12)
    np.testing.assert_allclose(d[1::2], np.cos(np.pi / 6), rtol=1e-12)
    rim_edges = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1)
    np.testing.assert_allclose(rim_edges, 0.5, rtol=1e-12)


# --- kresling -------------------------------------------------------------------

def test_kresling_single_unit_topology():
    mesh, creases = gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85))
    # open tube: V - E + F = 0
    assert euler_characteristic(mesh) == 0
    assert np.sum(mesh.edge_flags == EDGE_BOUNDARY) == 12


def test_kresling_conjugate_state_preserves_lengths():
    n, R = 6, 0.7
    # twist chosen so the conjugate state is exactly 0.4 lower
    h0 = 1.0
    chi0 = np.pi / 6 + np.arccos((h0 ** 2 - 0.6 ** 2) / (4 * R ** 2)
                                 / (np.sqrt(3) / 2))
    h1, chi1 = kresling_conjugate_state(n, R, h0, chi0)
    assert h1 < h0
    beta = 2 * np.pi / n

    def lengths(h, chi):
        lv = np.hypot(2 * R * np.sin(chi / 2), h)
        lm = np.hypot(2 * R * np.sin((chi - beta) / 2), h)
        return lv, lm

    np.testing.assert_allclose(lengths(h0, chi0), lengths(h1, chi1),
                               rtol=1e-12)
    # designed fold depth about 0.4
    assert abs((h0 - h1) - 0.4) < 1e-6


def test_kresling_stack_alternating():
    mesh, creases = gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85), n_units=4,
                                 stacking="alternating")
    for u in range(5):
        ring = mesh.vertex_groups[f"ring_{u}"]
        assert len(ring) == 6
        np.testing.assert_allclose(mesh.vertices[ring, 2], u * 1.0,
                                   atol=1e-12)
    assert "mountains" in creases.groups and "valleys" in creases.groups
    assert "rings" in creases.groups


def test_kresling_compliant_opens_slits():
    rigid, _ = gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85), panel_div=2)
    comp, creases = gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85),
                                 compliant=True, panel_div=2)
    # slit interior vertices are duplicated
    assert comp.n_vertices == rigid.n_vertices + 6
    assert "mountains" not in creases.groups
    # more boundary edges: each of the 6 slit diagonals contributes
    # 2 * panel_div open edges
    nb_r = np.sum(rigid.edge_flags == EDGE_BOUNDARY)
    nb_c = np.sum(comp.edge_flags == EDGE_BOUNDARY)
    assert nb_c == nb_r + 6 * 2 * 2


def test_kresling_end_caps_and_axis():
    mesh, creases = gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85), n_units=2,
                                 stacking="alternating", end_caps=True,
                                 axis="x")
    # closed surface: V - E + F = 2
    assert euler_characteristic(mesh) == 2
    assert np.sum(mesh.edge_flags == EDGE_BOUNDARY) == 0
    assert "caps" in mesh.face_groups
    assert "cap_hinges" in creases.groups
    # tube axis now along x
    ring0 = mesh.vertex_groups["ring_0"]
    ring2 = mesh.vertex_groups["ring_2"]
    assert abs(mesh.vertices[ring2, 0].mean()
               - mesh.vertices[ring0, 0].mean() - 2.0) < 1e-12


def test_kresling_rest_state_zero_energy():
    mesh, creases = gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85),
                                 compliant=True, panel_div=2)
    model = ElasticModel(mesh, creases, MAT)
    q0 = model.rest_state()
    assert model.total_energy(q0) < 1e-18
    assert np.abs(model.gradient(q0)).max() < 1e-10


def test_generators_pass_build_validation():
    # every generator output survives build_mesh re-validation
    for mesh in (
        gen_single_fold(1.0, 1.0, 0.8, 3)[0],
        gen_miura(2, 2, rho=0.5)[0],
        gen_waterbomb("flexible4", n_div=4)[0],
        gen_waterbomb("rigid12")[0],
        gen_kresling(6, 0.7, 1.0, np.deg2rad(97.85), n_units=2,
                     stacking="alternating", compliant=True,
                     panel_div=2, end_caps=True)[0],
    ):
        rebuilt = build_mesh(mesh.vertices, mesh.triangles)
        assert rebuilt.n_edges == mesh.n_edges
