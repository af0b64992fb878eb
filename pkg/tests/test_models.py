import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csaqs import models as md
from csaqs.qmath import angular_momentum_ops, coherent_spin_state, expm_hermitian, pauli_chain_op, unitarity_error

JX, JY, JZ = (np.array(a) for a in angular_momentum_ops(7.5))


def _comm_norm(a, b):
    return np.linalg.norm(a @ b - b @ a)


def _sorted_phases(u):
    return np.sort(np.angle(np.linalg.eigvals(u)))


# ---------------------------------------------------------------------------
# transverse Ising


def test_ti_decoupled_z_rotations():
    w = md.ti_propagator(1.0, 0.0, 0.4)
    assert np.abs(w - np.diag(np.diag(w))).max() < 1e-15
    assert abs(w[0, 0] - np.exp(1.6j)) < 1e-14


def test_ti_pure_coupling_commutes_with_sigma_x():
    w = md.ti_propagator(0.0, 1.0, 0.4)
    for i in range(1, 5):
        assert _comm_norm(w, pauli_chain_op(4, i, "x")) < 1e-12


def test_ti_hamiltonian_against_explicit_sum():
    h = np.zeros((16, 16), dtype=complex)
    sz = np.diag([1, -1])
    sx = np.array([[0, 1], [1, 0]])

    def ops(site, m):
        out = np.eye(1)
        for k in range(4):
            out = np.kron(out, m if k == site else np.eye(2))
        return out

    for i in range(4):
        h -= 0.8 * ops(i, sz)
    for i in range(3):
        h -= 1.0 * ops(i, sx) @ ops(i + 1, sx)
    assert np.abs(md.ti_hamiltonian(0.8, 1.0) - h).max() < 1e-14


def test_ti_fig2_point_eigenphases_match_diagonalization():
    h = md.ti_hamiltonian(0.8, 1.0)
    ev = np.linalg.eigvalsh(h)
    oracle = np.sort(np.angle(np.exp(-1j * ev * 0.4)))
    assert np.abs(_sorted_phases(md.ti_propagator(0.8, 1.0, 0.4)) - oracle).max() < 1e-10


def test_ti_s0_magnetization_constant():
    w = md.ti_propagator(0.7, 0.0, 0.9)
    for b in range(16):
        psi = np.zeros(16, dtype=complex)
        psi[b] = 1
        out = w @ psi
        for i in range(1, 5):
            z = pauli_chain_op(4, i, "z")
            assert abs(np.vdot(out, z @ out) - np.vdot(psi, z @ psi)) < 1e-14


# ---------------------------------------------------------------------------
# LMG


def test_lmg_s0_is_jz_rotation():
    w = md.lmg_propagator(0.0, 0.8)
    m = 7.5 - np.arange(16)
    assert np.abs(w - np.diag(np.exp(1j * m * 0.8))).max() < 1e-13


def test_lmg_s1_diagonal_in_jx_basis():
    ev, q = np.linalg.eigh(JX)
    w = md.lmg_propagator(1.0, 0.8)
    d = q.conj().T @ w @ q
    assert np.abs(d - np.diag(np.exp(1j * ev**2 * 0.8))).max() < 1e-12


def test_lmg_fig2_spectrum():
    h = -(0.6) * JZ - 0.4 * JX @ JX
    oracle = np.sort(np.angle(np.exp(-1j * np.linalg.eigvalsh(h) * 0.8)))
    assert np.abs(_sorted_phases(md.lmg_propagator(0.4, 0.8)) - oracle).max() < 1e-10


@pytest.mark.parametrize("s", np.linspace(0, 1, 6))
def test_lmg_parity(s):
    parity = expm_hermitian(7.5 * np.eye(16) + JZ, -np.pi)
    assert _comm_norm(md.lmg_hamiltonian(s), parity) < 1e-10


def test_lmg_rejects_out_of_range():
    with pytest.raises(ValueError):
        md.ModelSpec.lmg(1.5, 0.8)
    with pytest.raises(ValueError):
        md.ModelSpec.ti(1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# kicked top


def test_qkt_kappa0_is_kick():
    w = md.qkt_floquet(1.3, 0.0)
    m = 7.5 - np.arange(16)
    assert np.abs(w - np.diag(np.exp(1.3j * m))).max() < 1e-14


def test_qkt_p0_commutes_with_jx():
    assert _comm_norm(md.qkt_floquet(0.0, 7.0), JX) < 1e-12


def test_qkt_factor_product_oracle():
    kick = expm_hermitian(-JZ, 1.0)
    torsion = expm_hermitian(-(7.0 / 15.0) * JX @ JX, 1.0)
    w = md.qkt_floquet(1.0, 7.0)
    assert np.abs(w - torsion @ kick).max() < 1e-12
    assert np.abs(_sorted_phases(w) - _sorted_phases(torsion @ kick)).max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(-1, 1), st.floats(0.1, 1.0))
def test_propagators_unitary_and_time_reversible(dt, h, s):
    for w, back in [
        (md.ti_propagator(h, s, dt), md.ti_propagator(h, s, -dt)),
        (md.lmg_propagator(s, dt), md.lmg_propagator(s, -dt)),
    ]:
        assert unitarity_error(w) < 1e-10
        assert np.abs(w @ back - np.eye(16)).max() < 1e-10
    assert unitarity_error(md.qkt_floquet(h, 10 * s)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0, np.pi), st.floats(0, 2 * np.pi), st.floats(-np.pi, np.pi))
def test_qkt_kappa0_quantum_classical_agreement(theta, phi, p):
    psi = coherent_spin_state(7.5, theta, phi)
    out = md.qkt_floquet(p, 0.0) @ psi
    quantum = np.array([np.vdot(out, op @ out).real for op in (JX, JY, JZ)]) / 7.5
    start = np.array([np.vdot(psi, op @ psi).real for op in (JX, JY, JZ)]) / 7.5
    classical = md.classical_qkt_step(start / np.linalg.norm(start), p, 0.0).as_array()
    assert np.abs(quantum - classical).max() < 1e-10


def test_basis_map_identity_and_roundtrip():
    for m in (md.ModelSpec.ti(1, 1, 0.4), md.ModelSpec.lmg(0.4, 0.8), md.ModelSpec.qkt(1, 7)):
        perm = md.system_to_simulator_map(m)
        assert perm[0] == 0
        assert np.array_equal(perm[md.invert_permutation(perm)], np.arange(16))


def test_model_spec_roundtrip():
    for m in (md.ModelSpec.ti(0.8, 1, 0.4), md.ModelSpec.lmg(0.4, 0.8), md.ModelSpec.qkt(1, 7), md.ModelSpec.identity()):
        assert md.ModelSpec.from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        md.ModelSpec("heisenberg")


def test_classical_step_examples():
    # kick by p rotates the Bloch vector by -p about z in this convention
    out = md.classical_qkt_step((1, 0, 0), np.pi / 2, 0.0)
    assert np.allclose(out, (0, -1, 0), atol=1e-15)
    assert np.allclose(md.classical_qkt_step((1, 0, 0), 0.0, 7.0), (1, 0, 0), atol=1e-15)
    with pytest.raises(ValueError):
        md.classical_qkt_step((1, 1, 0), 1.0, 1.0)


def test_classical_step_norm_over_long_orbit():
    v = (0.6, 0.0, 0.8)
    worst = 0.0
    for _ in range(10_000):
        v = md.classical_qkt_step(v, 1.0, 7.0)
        worst = max(worst, abs(np.linalg.norm(v) - 1))
    assert worst < 1e-14


def test_jacobian_matches_finite_difference():
    v = np.array([0.3, -0.5, np.sqrt(1 - 0.34)])
    jac = md._jacobian(v, 1.0, 7.0)
    eps = 1e-7
    # tangent directions only: the map is defined on the sphere
    for e in np.linalg.svd(v[None])[2][1:]:
        fd = (md._step(v + eps * e, 1.0, 7.0) - md._step(v - eps * e, 1.0, 7.0)) / (2 * eps)
        assert np.abs(jac @ e - fd).max() < 1e-6


def test_lyapunov_regimes():
    assert md.lyapunov_estimate(1.0, 7.0, seed=0) > 0.1
    assert md.lyapunov_estimate(1.0, 0.0, seed=0) <= 1e-3
    island = md.lyapunov_estimate(0.99, 2.3, seed=0, initial_points=[(0, 0, -1)])
    assert island < 0.02
    assert md.lyapunov_estimate(1.0, 7.0, seed=3) == md.lyapunov_estimate(1.0, 7.0, seed=3)


def test_phase_portrait_basics():
    trajs = md.phase_portrait(1.0, 7.0, [(0, 0, 1)], 0)
    assert np.array_equal(trajs[0], [[0, 0, 1]])
    trajs = md.phase_portrait(1.0, 7.0, md.sphere_grid(20, seed=1), 200)
    pts = np.concatenate(trajs)
    assert np.abs(np.linalg.norm(pts, axis=1) - 1).max() < 1e-10


def test_mixed_phase_space_hemispheres():
    # the regular island sits at the south pole in this operator ordering
    rng = np.random.default_rng(0)
    near = lambda pole: [pole + 0.05 * rng.standard_normal(3) for _ in range(5)]
    unit = lambda pts: [p / np.linalg.norm(p) for p in pts]
    island = md.phase_portrait(0.99, 2.3, unit(near(np.array([0, 0, -1.0]))), 1000)
    assert all(t[:, 2].max() < 0 for t in island)
    sea = md.phase_portrait(0.99, 2.3, unit(near(np.array([0, 0, 1.0]))), 1000)
    assert any(t[:, 2].min() < 0 < t[:, 2].max() for t in sea)


def test_trajectory_csv(tmp_path):
    trajs = md.phase_portrait(1.0, 7.0, md.sphere_grid(3), 4)
    path = tmp_path / "t.csv"
    md.write_trajectories_csv(path, trajs)
    lines = path.read_text().splitlines()
    assert lines[0] == "X,Y,Z,step,trajectory_id"
    assert len(lines) == 1 + 3 * 5
    x = float(lines[7].split(",")[0])
    assert x == trajs[1][1, 0]


def test_model_observables():
    obs = md.model_observables(md.ModelSpec.ti(1, 1, 0.4))
    assert np.array_equal(obs["sigma2z"], pauli_chain_op(4, 2, "z"))
    assert set(md.model_observables(md.ModelSpec.qkt(1, 7))) == {"Jx", "Jy", "Jz"}
