import numpy as np
import pytest

from foldsim.energy import (
    ElasticModel,
    MaterialParams,
    bending_strain,
    membrane_strain,
    sv_norm,
)
from foldsim.errors import DofLengthMismatch, SingularReference
from foldsim.mesh import CreaseSet, build_mesh, mark_creases
from foldsim.patterns import gen_miura, gen_single_fold

MAT = MaterialParams(E=100.0, nu=0.3, h=0.05, rho=1.0)


def rand_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def fold_model(phi0=0.8, n_div=2, n_len=2, k_r=2.0, **kw):
    mesh, creases = gen_single_fold(1.0, 1.0, phi0, n_div, n_len=n_len,
                                    k_r=k_r)
    return ElasticModel(mesh, creases, MAT, **kw)


# --- strain measures and the SV norm ---------------------------------------

def test_membrane_strain_rest_zero():
    A = np.array([[2.0, 0.3], [0.3, 1.5]])
    np.testing.assert_allclose(membrane_strain(A, A), 0.0, atol=1e-15)


def test_membrane_strain_uniform_stretch():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(3, 3))
    from foldsim.geometry import first_form
    A0 = first_form(*p)
    s = 1.3
    A1 = first_form(*(s * p))
    eps = membrane_strain(A1, A0)
    np.testing.assert_allclose(eps, (s * s - 1) * np.eye(2), rtol=1e-10,
                               atol=1e-12)


def test_membrane_strain_random_matches_solve():
    rng = np.random.default_rng(1)
    for _ in range(10):
        A = rng.normal(size=(2, 2))
        Ar = rng.normal(size=(2, 2))
        Ar = Ar @ Ar.T + 2 * np.eye(2)
        expect = np.linalg.solve(Ar, A) - np.eye(2)
        np.testing.assert_allclose(membrane_strain(A, Ar), expect, rtol=1e-10)


def test_membrane_strain_singular_reference():
    with pytest.raises(SingularReference):
        membrane_strain(np.eye(2), np.zeros((2, 2)))


def test_bending_strain_cases():
    rng = np.random.default_rng(2)
    Ar = np.array([[1.1, 0.2], [0.2, 0.9]])
    B = rng.normal(size=(2, 2))
    np.testing.assert_allclose(bending_strain(B, B, Ar), 0.0, atol=1e-15)
    k1 = bending_strain(B, np.zeros((2, 2)), Ar)
    k2 = bending_strain(2 * B, np.zeros((2, 2)), Ar)
    np.testing.assert_allclose(k2, 2 * k1, rtol=1e-12)


def test_sv_norm_values():
    assert sv_norm(np.zeros((2, 2)), 7.0, 0.3) == 0.0
    # eps = a I at nu = 0 collapses to E a^2
    a = 0.17
    assert abs(sv_norm(a * np.eye(2), 5.0, 0.0) - 5.0 * a * a) < 1e-14
    # random strain against an independent evaluation
    rng = np.random.default_rng(3)
    eps = rng.normal(size=(2, 2))
    E, nu = 3.0, 0.3
    tr = eps[0, 0] + eps[1, 1]
    tr_sq = np.trace(eps @ eps)
    expect = E * nu / (2 * (1 - nu ** 2)) * tr ** 2 \
        + E / (2 * (1 + nu)) * tr_sq
    assert abs(sv_norm(eps, E, nu) - expect) < 1e-12 * abs(expect)


# --- assembled energies ------------------------------------------------------

def test_rest_configuration_zero_energy():
    model = fold_model()
    br = model.energy_breakdown(model.rest_state())
    assert abs(br.stretch) < 1e-14
    assert abs(br.bend) < 1e-14
    assert abs(br.rotation) < 1e-14
    assert abs(br.total - (br.stretch + br.bend + br.rotation)) < 1e-15


def test_stretch_scales_quadratically():
    # flat sheet stretched uniaxially by delta and 2*delta: factor 4 +- 1%
    mesh, creases = gen_single_fold(1.0, 1.0, 0.0, 2, n_len=2, k_r=0.0)
    model = ElasticModel(mesh, creases, MAT)
    q0 = model.rest_state()

    def stretched(delta):
        q = q0.copy()
        pos, _ = model.dof.split(q)
        pos[:, 0] *= (1.0 + delta)
        return model.energy_breakdown(q).stretch

    r = stretched(2e-4) / stretched(1e-4)
    assert abs(r - 4.0) < 0.04


def test_crease_energy_arithmetic():
    # K_r = 2, (phi_v - phi0) = 0.1, unit segment length -> U_rot = 0.01
    mesh, creases = gen_single_fold(1.0, 1.0, 0.5, 1, n_len=1, k_r=2.0)
    model = ElasticModel(mesh, creases, MAT)
    q = model.rest_state()
    q[model.dof.crease_dof(0)] += 0.1
    br = model.energy_breakdown(q)
    assert abs(br.rotation - 0.5 * 2.0 * 0.1 ** 2 * 1.0) < 1e-12


def test_total_energy_rigid_motion_invariant():
    rng = np.random.default_rng(4)
    model = fold_model()
    q0 = model.rest_state()
    pos, ang = model.dof.split(q0.copy())
    pos += 0.03 * rng.normal(size=pos.shape)          # stressed state
    q = model.dof.join(pos, ang)
    e0 = model.total_energy(q)
    for _ in range(3):
        R = rand_rotation(rng)
        t = rng.normal(size=3)
        q2 = model.dof.join(pos @ R.T + t, ang)
        assert abs(model.total_energy(q2) - e0) < 1e-10 * max(1.0, abs(e0))


def test_dof_length_mismatch():
    model = fold_model()
    with pytest.raises(DofLengthMismatch):
        model.total_energy(np.zeros(model.dof.total + 1))


def test_gradient_zero_at_rest():
    model = fold_model()
    g = model.gradient(model.rest_state())
    assert np.abs(g).max() < 1e-12


def test_gradient_matches_fd_on_random_states():
    rng = np.random.default_rng(5)
    for name, model in (("fold", fold_model()),
                        ("miura", _miura_model())):
        q0 = model.rest_state()
        scale = model.mesh.bbox_scale()
        worst = 0.0
        n_states = 25
        for _ in range(n_states):
            q = q0 + 0.02 * scale * rng.normal(size=q0.shape)
            g = model.gradient(q)
            h = 1e-6 * scale
            fd = np.empty_like(g)
            for i in range(len(q)):
                qp = q.copy(); qp[i] += h
                qm = q.copy(); qm[i] -= h
                fd[i] = (model.total_energy(qp)
                         - model.total_energy(qm)) / (2 * h)
            rel = np.linalg.norm(g - fd) / np.linalg.norm(fd)
            worst = max(worst, rel)
        assert worst < 1e-6, f"{name}: {worst}"


def _miura_model():
    mesh, creases = gen_miura(1, 1, rho=0.5, k_r=0.7)
    return ElasticModel(mesh, creases, MAT)


def test_dPi_dphiv_zero_at_rest():
    model = fold_model()
    q = model.rest_state()
    g = model.gradient(q)
    assert abs(g[model.dof.crease_dof(0)]) < 1e-12


def test_tangent_symmetry_and_fd():
    rng = np.random.default_rng(6)
    model = fold_model()
    q = model.rest_state() + 0.03 * rng.normal(size=model.dof.total)
    K = model.tangent(q)
    Kd = K.toarray()
    assert np.abs(Kd - Kd.T).max() <= 1e-8 * np.abs(Kd).max()
    h = 1e-6
    fd = np.empty_like(Kd)
    for i in range(Kd.shape[0]):
        qp = q.copy(); qp[i] += h
        qm = q.copy(); qm[i] -= h
        fd[:, i] = (model.gradient(qp) - model.gradient(qm)) / (2 * h)
    assert np.abs(Kd - fd).max() < 1e-4 * np.abs(fd).max()


def _flat_grid(n):
    xs = np.linspace(0, 1, n + 1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    tris = []
    for i in range(n):
        for j in range(n):
            tris.append((idx[i, j], idx[i + 1, j], idx[i + 1, j + 1]))
            tris.append((idx[i, j], idx[i + 1, j + 1], idx[i, j + 1]))
    return build_mesh(verts, np.asarray(tris)), idx


def _count_zero_modes(K):
    w = np.sort(np.abs(np.linalg.eigvalsh(K)))
    cutoff = 1e-5 * w[-1]
    k = int(np.sum(w < cutoff))
    assert w[k] > 10 * cutoff, "no clear spectral gap"
    return k


def test_zero_energy_modes_flat_patch():
    # crease-free stress-free flat patch: exactly 6 near-zero eigenvalues
    mesh, _ = _flat_grid(2)
    model = ElasticModel(mesh, CreaseSet.empty(), MAT)
    K = model.tangent(model.rest_state()).toarray()
    assert _count_zero_modes(K) == 6

    # an embedded crease (not reaching the boundary, so no fold mechanism)
    # with K_r = 0 and the bending coupling disabled adds exactly one
    # decoupled zero mode per virtual angle
    mesh2, idx2 = _flat_grid(4)
    creases2 = mark_creases(mesh2, [[idx2[1, 2], idx2[2, 2], idx2[3, 2]]],
                            0.0, 0.0)
    model2 = ElasticModel(mesh2, creases2, MAT, include_crease_bending=False)
    K2 = model2.tangent(model2.rest_state()).toarray()
    assert _count_zero_modes(K2) == 6 + creases2.n_segments
    # the virtual-angle rows are exactly decoupled
    n1 = 3 * mesh2.n_vertices
    assert np.abs(K2[n1:, :]).max() == 0.0


def test_quadratic_scaling_near_equilibrium():
    rng = np.random.default_rng(7)
    model = fold_model()
    q0 = model.rest_state()
    d = rng.normal(size=q0.shape)
    d /= np.linalg.norm(d)
    ratios = []
    for eps in (1e-3, 1e-4, 1e-5):
        ratios.append(model.total_energy(q0 + eps * d) / eps ** 2)
    assert abs(ratios[1] / ratios[2] - 1.0) < 1e-2


def test_crease_bending_couples_phi_v():
    # moving phi_v away from the mesh dihedral costs bending energy even
    # with K_r = 0 (the additional-bending coupling at work)
    mesh, creases = gen_single_fold(1.0, 1.0, 0.7, 2, n_len=1, k_r=0.0)
    model = ElasticModel(mesh, creases, MAT)
    q = model.rest_state()
    q[model.dof.crease_dof(0)] += 0.2
    br = model.energy_breakdown(q)
    assert br.bend > 1e-8
    assert br.rotation == 0.0
