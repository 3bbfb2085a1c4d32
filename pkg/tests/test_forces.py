import numpy as np
import pytest

from foldsim.energy import ElasticModel, MaterialParams
from foldsim.errors import PenetrationUnderflow
from foldsim.forces import (
    ContactParams,
    FrictionParams,
    LoadSet,
    MagnetSpec,
    contact_force,
    contact_potential,
    d_f_frc,
    f_frc,
    friction_force,
    gravity_force,
    magnetic_force,
)
from foldsim.mesh import CreaseSet, build_mesh, lumped_mass, mark_creases
from foldsim.patterns import gen_single_fold

MAT = MaterialParams(E=50.0, nu=0.3, h=0.05, rho=2.0)


def small_mesh():
    verts = np.array([[0.0, 0, 1], [1, 0, 1], [0.5, 1, 1], [0.5, -1, 1]])
    return build_mesh(verts, np.array([[0, 1, 2], [1, 0, 3]]))


# --- gravity ---------------------------------------------------------------

def test_gravity_zero_field():
    mesh = small_mesh()
    m = lumped_mass(mesh, CreaseSet.empty(), MAT)
    f = gravity_force(m, np.zeros(3), mesh.n_vertices)
    assert np.all(f == 0)


def test_gravity_total_and_crease_zeros():
    mesh, creases = gen_single_fold(1.0, 1.0, 0.5, 2, k_r=1.0)
    m = lumped_mass(mesh, creases, MAT)
    g = np.array([0.3, -0.1, -9.8])
    f = gravity_force(m, g, mesh.n_vertices)
    total = f[:3 * mesh.n_vertices].reshape(-1, 3).sum(axis=0)
    expect = m[:3 * mesh.n_vertices:3].sum() * g
    np.testing.assert_allclose(total, expect, rtol=1e-12)
    assert np.all(f[3 * mesh.n_vertices:] == 0)


# --- contact -----------------------------------------------------------------

CP = ContactParams(stiffness=10.0, d_tilde=0.1)


def test_contact_inactive_and_c1_activation():
    # exactly at the threshold: force and stiffness both vanish
    psi, dp, dpp = contact_potential(np.array([CP.d_tilde]), CP)
    assert psi[0] == 0 and dp[0] == 0 and dpp[0] == 0
    # above: nothing
    psi, dp, dpp = contact_potential(np.array([0.5]), CP)
    assert psi[0] == 0 and dp[0] == 0
    # C1: slope continuous across d_tilde under symmetric sampling
    eps = 1e-4 * CP.d_tilde
    _, dp_m, _ = contact_potential(np.array([CP.d_tilde - eps]), CP)
    _, dp_p, _ = contact_potential(np.array([CP.d_tilde + eps]), CP)
    assert abs(dp_m[0] - dp_p[0]) < 1e-6 * CP.stiffness * CP.d_tilde


def test_contact_force_matches_fd_and_repulsive():
    d = CP.d_tilde / 2
    psi, dp, dpp = contact_potential(np.array([d]), CP)
    h = 1e-7
    pp, _, _ = contact_potential(np.array([d + h]), CP)
    pm, _, _ = contact_potential(np.array([d - h]), CP)
    fd = (pp[0] - pm[0]) / (2 * h)
    assert abs(dp[0] - fd) < 1e-6 * abs(fd)
    # repulsive: force along +n
    pos = np.array([[0.0, 0.0, d]])
    f, trip, _, active, N = contact_force(pos, np.zeros((1, 3)), CP)
    assert active[0]
    assert f[0, 2] > 0
    assert N[0] > 0
    # tangent block is -Psi'' n n^T
    K = np.zeros((3, 3))
    for r, c, v in zip(*trip):
        K[r, c] += v
    np.testing.assert_allclose(K, -dpp[0] * np.outer([0, 0, 1], [0, 0, 1]),
                               rtol=1e-12)


def test_contact_penetration_underflow():
    pos = np.array([[0.0, 0.0, 1e-9]])
    with pytest.raises(PenetrationUnderflow):
        contact_force(pos, np.zeros((1, 3)), CP)


def test_contact_strictly_repulsive_below_threshold():
    ds = np.linspace(0.05 * CP.d_tilde, 0.999 * CP.d_tilde, 50)
    _, dp, _ = contact_potential(ds, CP)
    assert np.all(-dp > 0)


# --- friction ----------------------------------------------------------------

def test_f_frc_variants_values_and_c1():
    qp = FrictionParams(mu=0.5, eps_v=1.0, variant="smooth_quadratic")
    cp = FrictionParams(mu=0.5, eps_v=1.0, variant="smoothstep_cubic")
    assert f_frc(0.0, qp) == 0.0
    assert f_frc(1.0, qp) == 1.0
    assert f_frc(2.0, qp) == 1.0
    assert abs(f_frc(0.5, cp) - 0.5) < 1e-15       # 3/4 - 1/4
    # C1 at the knots by symmetric finite differences
    for p in (qp, cp):
        for knot in (0.0, 1.0):
            h = 1e-7
            lo = max(knot - h, 0.0)
            slope_m = (f_frc(knot, p) - f_frc(lo, p)) / max(knot - lo, h)
            slope_p = (f_frc(knot + h, p) - f_frc(knot, p)) / h
            if knot == 0.0:
                continue  # left side clamped at zero speed
            assert abs(slope_p - slope_m) < 1e-6
    # the uncorrected published quadratic is discontinuous at the knot
    pe = FrictionParams(mu=0.5, eps_v=1.0, variant="smooth_quadratic",
                        paper_exact=True)
    assert abs(f_frc(1.0 - 1e-12, pe) - 0.0) < 1e-9
    assert f_frc(1.0, pe) == 1.0


def test_friction_zero_velocity_and_cap():
    fp = FrictionParams(mu=0.4, eps_v=0.1)
    pos = np.zeros((2, 3))
    active = np.array([True, True])
    N = np.array([2.0, 2.0])
    f, _ = friction_force(pos, np.zeros((2, 3)), N, fp, active, [0, 0, 1.0])
    assert np.all(f == 0)
    # |f| <= mu N, equality only at v >= eps_v
    for speed in (0.01, 0.05, 0.1, 1.0):
        v = np.array([[speed, 0, 0], [0.5 * speed, 0.5 * speed, 0]])
        f, _ = friction_force(pos, v, N, fp, active, [0, 0, 1.0])
        mags = np.linalg.norm(f, axis=1)
        assert np.all(mags <= fp.mu * N + 1e-12)
        if speed >= fp.eps_v:
            assert abs(mags[0] - fp.mu * N[0]) < 1e-12
        # opposes motion
        assert f[0, 0] <= 0


def test_unidirectional_friction_free_direction():
    fp = FrictionParams(mu=0.4, eps_v=0.1, variant="unidirectional_cubic",
                        forward=np.array([1.0, 0, 0]))
    pos = np.zeros((1, 3))
    active = np.array([True])
    N = np.array([1.0])
    # forward motion: free
    f, _ = friction_force(pos, np.array([[0.2, 0, 0]]), N, fp, active,
                          [0, 0, 1.0])
    assert np.all(f == 0)
    # backward motion: blocked
    f, _ = friction_force(pos, np.array([[-0.2, 0, 0]]), N, fp, active,
                          [0, 0, 1.0])
    assert f[0, 0] > 0
    assert abs(f[0, 0] - fp.mu * N[0]) < 1e-12


# --- magnetics ----------------------------------------------------------------

def magnet_setup(b_mat, field, sign=1.0):
    mesh = small_mesh()
    spec = MagnetSpec(faces=np.array([0]), b_mat=np.array([b_mat]),
                      field=lambda t: np.asarray(field, dtype=float),
                      sign=sign)
    return mesh, spec


def test_magnetic_parallel_and_perpendicular():
    # face 0 normal is +z, frame t1 = +x
    mesh, spec = magnet_setup([0, 0, 2.0], [0, 0, 3.0])
    psi, f, _ = magnetic_force(mesh, mesh.vertices, spec, 0.0)
    area = mesh.triangle_areas()[0]
    assert abs(psi - 2.0 * 3.0 * area) < 1e-12
    mesh, spec = magnet_setup([2.0, 0, 0], [0, 0, 3.0])
    psi, f, _ = magnetic_force(mesh, mesh.vertices, spec, 0.0)
    assert abs(psi) < 1e-12


def test_magnetic_force_matches_fd():
    rng = np.random.default_rng(0)
    mesh, spec = magnet_setup(rng.normal(size=3), rng.normal(size=3))
    pos = mesh.vertices + 0.1 * rng.normal(size=mesh.vertices.shape)
    psi0, f, trip = magnetic_force(mesh, pos, spec, 0.0)
    h = 1e-7
    for v in mesh.triangles[0]:
        for ax in range(3):
            pp = pos.copy(); pp[v, ax] += h
            pm = pos.copy(); pm[v, ax] -= h
            psi_p, _, _ = magnetic_force(mesh, pp, spec, 0.0)
            psi_m, _, _ = magnetic_force(mesh, pm, spec, 0.0)
            fd = -(psi_p - psi_m) / (2 * h)
            assert abs(f[v, ax] - fd) < 1e-6 * max(1.0, abs(fd))


def test_magnetic_invariances():
    rng = np.random.default_rng(1)
    mesh, spec = magnet_setup(rng.normal(size=3), rng.normal(size=3))
    psi0, _, _ = magnetic_force(mesh, mesh.vertices, spec, 0.0)
    # translation invariance
    psi1, _, _ = magnetic_force(mesh, mesh.vertices + [2.0, -1.0, 0.5],
                                spec, 0.0)
    assert abs(psi1 - psi0) < 1e-12
    # rotation equivariance: Psi(R q; B) = Psi(q; R^T B)
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th), 0],
                  [np.sin(th), np.cos(th), 0], [0, 0, 1.0]])
    psi2, _, _ = magnetic_force(mesh, mesh.vertices @ R.T, spec, 0.0)
    B = spec.field(0.0)
    spec_rot = MagnetSpec(faces=spec.faces, b_mat=spec.b_mat,
                          field=lambda t: R.T @ B, sign=spec.sign)
    psi3, _, _ = magnetic_force(mesh, mesh.vertices, spec_rot, 0.0)
    assert abs(psi2 - psi3) < 1e-12


# --- assembly ----------------------------------------------------------------

def test_assemble_no_loads_zero():
    mesh, creases = gen_single_fold(1.0, 1.0, 0.4, 2, k_r=1.0)
    model = ElasticModel(mesh, creases, MAT)
    mass = lumped_mass(mesh, creases, MAT)
    loads = LoadSet(mass=mass, n_vertices=mesh.n_vertices, mesh=mesh)
    q = model.rest_state()
    f, jq, jv, pot = loads.assemble(q, np.zeros_like(q), 0.0)
    assert np.all(f == 0)
    assert pot == 0.0


def test_assemble_crease_entries_always_zero():
    mesh, creases = gen_single_fold(1.0, 1.0, 0.4, 2, k_r=1.0)
    model = ElasticModel(mesh, creases, MAT)
    mass = lumped_mass(mesh, creases, MAT)
    pos = mesh.vertices + [0, 0, 0.6]
    q = model.dof.join(pos, model.rest_angles_measured())
    v = np.zeros_like(q)
    v[: 3 * mesh.n_vertices] = 0.05
    loads = LoadSet(mass=mass, n_vertices=mesh.n_vertices, mesh=mesh,
                    gravity=np.array([0, 0, -9.8]),
                    contact=ContactParams(stiffness=5.0, d_tilde=0.7),
                    friction=FrictionParams(mu=0.3, eps_v=0.01),
                    magnets=MagnetSpec(faces=np.array([0]),
                                       b_mat=np.array([[0.1, 0.2, 0.3]]),
                                       field=lambda t: np.array([0, 1.0, 0])))
    f, jq, jv, pot = loads.assemble(q, v, 0.0)
    assert np.any(f != 0)
    assert np.all(f[3 * mesh.n_vertices:] == 0)
