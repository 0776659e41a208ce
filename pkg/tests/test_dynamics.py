import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonforge import dynamics as dyn
from bosonforge import fock
from bosonforge.dynamics import LambDickeParams, NoiseModel
from bosonforge.waveform import TWO_PI, Waveform

OMEGA = TWO_PI * 2000


def random_waveform(seed, n_seg=12, duration=300e-6):
    rng = np.random.default_rng(seed)
    return Waveform(np.full(n_seg, duration / n_seg), rng.uniform(-np.pi, np.pi, n_seg), rng.uniform(-np.pi, np.pi, n_seg))


def test_control_hamiltonian_elements():
    n = 6
    h = dyn.control_hamiltonian(0.3, -0.7, 1.1, 0.9, n)
    assert np.allclose(h, h.conj().T, atol=1e-12)
    up0, down1 = n + 0, 1
    assert h[up0, down1] == pytest.approx(1.1 * np.exp(0.3j) / 2)
    x = fock.position(n)
    ref = (1.0 / np.sqrt(2)) * fock.embed_hybrid(fock.SIGMA_X, x)
    assert np.allclose(dyn.control_hamiltonian(0, 0, 1.0, 1.0, n), ref, atol=1e-12)


def test_quadrature_form():
    """H(φr, φb) = (Ω/√2)(cos φs σ_x - sin φs σ_y)(cos φm x̂ - sin φm p̂)."""
    n = 8
    phi_r, phi_b = 0.9, -0.4
    ps, pm = (phi_r + phi_b) / 2, (phi_r - phi_b) / 2
    rot = np.cos(pm) * fock.position(n) - np.sin(pm) * fock.momentum(n)
    s = np.cos(ps) * fock.SIGMA_X - np.sin(ps) * fock.SIGMA_Y
    ref = (1 / np.sqrt(2)) * fock.embed_hybrid(s, rot)
    assert np.allclose(dyn.control_hamiltonian(phi_r, phi_b, 1.0, 1.0, n), ref, atol=1e-12)


def test_hamiltonian_commutes_with_joint_parity():
    h = dyn.control_hamiltonian(1.2, 0.4, OMEGA, OMEGA, 15)
    p = dyn.joint_parity(15)
    assert np.max(np.abs(h @ p - p @ h)) < 1e-12 * OMEGA


def test_empty_waveform_is_identity():
    psi = dyn.ground_hybrid(5)
    assert np.allclose(dyn.propagate_unitary(Waveform.empty(), psi), psi)


def test_red_sideband_rabi():
    n = 5
    t = 137e-6
    wf = Waveform.uniform(t, 0.0, 0.0, omega_r_hz=2000, omega_b_hz=1e-9)
    psi0 = fock.hybrid_state(fock.UP, fock.fock_state(0, n))
    out = dyn.propagate_unitary(wf, psi0)
    assert abs(out[n]) ** 2 == pytest.approx(np.cos(OMEGA * t / 2) ** 2, abs=1e-9)


def test_semigroup_split():
    whole = Waveform.uniform(200e-6, 0.4, 1.3)
    halves = Waveform(np.full(2, 100e-6), np.full(2, 0.4), np.full(2, 1.3))
    psi = dyn.ground_hybrid(20)
    assert np.allclose(dyn.propagate_unitary(whole, psi), dyn.propagate_unitary(halves, psi), atol=1e-10)


def test_matches_matrix_exponential():
    from scipy.linalg import expm

    wf = random_waveform(3, n_seg=5)
    n = 12
    psi = dyn.ground_hybrid(n)
    ref = psi
    for seg in wf.segments():
        ref = expm(-1j * dyn.segment_hamiltonian(seg, wf, n) * seg.dt) @ ref
    assert np.allclose(dyn.propagate_unitary(wf, psi), ref, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_joint_parity_and_norm_conserved(seed):
    wf = random_waveform(seed)
    n = 20
    rng = np.random.default_rng(seed)
    # superposition of |↓,even⟩ and |↑,odd⟩ keeps a definite joint parity
    psi = np.zeros(2 * n, dtype=complex)
    psi[0:n:2] = rng.normal(size=n // 2)
    psi[n + 1 :: 2] = rng.normal(size=n // 2)
    psi[n - 4 : n] = 0
    psi[2 * n - 4 :] = 0
    psi /= np.linalg.norm(psi)
    out = dyn.propagate_unitary(wf, psi, delta=TWO_PI * 50)
    p = dyn.joint_parity(n)
    assert abs(np.vdot(out, p @ out) - np.vdot(psi, p @ psi)) < 1e-8
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-8)


def test_segment_unitarity():
    u = dyn.waveform_unitary(random_waveform(1, n_seg=3), 15, delta=TWO_PI * 30)
    assert np.allclose(u @ u.conj().T, np.eye(30), atol=1e-9)


def test_detuning_leaves_vacuum_alone():
    wf = Waveform.uniform(300e-6, 0, 0, omega_r_hz=1e-12, omega_b_hz=1e-12)
    psi = dyn.ground_hybrid(6)
    assert np.allclose(dyn.propagate_detuned(wf, TWO_PI * 500, psi), psi, atol=1e-12)
    wf2 = random_waveform(2)
    assert np.allclose(dyn.propagate_detuned(wf2, 0.0, psi), dyn.propagate_unitary(wf2, psi))


def test_master_closed_system_limit():
    wf = random_waveform(5, n_seg=6)
    psi = dyn.ground_hybrid(15)
    rho = dyn.propagate_master(wf, NoiseModel(), psi)
    ref = fock.ket_to_dm(dyn.propagate_unitary(wf, psi))
    assert np.max(np.abs(rho - ref)) < 1e-7


def test_master_pure_dephasing_analytic():
    n, gamma = 10, 40.0
    t = 1 / gamma
    wf = Waveform.uniform(t, 0, 0, omega_r_hz=1e-12, omega_b_hz=1e-12)
    osc = fock.coherent_state(1.2, n)
    rho0 = np.kron(np.diag([1.0, 0.0]), fock.ket_to_dm(osc))
    delta = TWO_PI * 5
    rho = dyn.propagate_master(wf, NoiseModel(gamma, delta), rho0)[:n, :n]
    m, k = np.indices((n, n))
    ref = fock.ket_to_dm(osc) * np.exp(-gamma * (m - k) ** 2 * t / 2 - 1j * delta * (m - k) * t)
    assert np.max(np.abs(rho - ref)) < 1e-8


def test_master_invariants_and_purity_decrease():
    wf = random_waveform(9, n_seg=8, duration=400e-6)
    noise = NoiseModel(60.0, TWO_PI * 30)
    psi = dyn.ground_hybrid(15)
    purities = []
    for k in range(1, 9):
        part = Waveform(wf.dt[:k], wf.phi_r[:k], wf.phi_b[:k])
        rho = dyn.propagate_master(part, noise, psi)
        assert abs(np.trace(rho) - 1) < 1e-7
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
        assert np.linalg.eigvalsh(rho).min() > -1e-6
        purities.append(np.real(np.trace(rho @ rho)))
    assert np.all(np.diff(purities) <= 1e-10)


def test_master_tolerance_convergence():
    wf = random_waveform(4, n_seg=4)
    noise = NoiseModel(30.0, TWO_PI * 18)
    psi = dyn.ground_hybrid(12)
    a = dyn.propagate_master(wf, noise, psi, rtol=1e-8, atol=1e-10)
    b = dyn.propagate_master(wf, noise, psi, rtol=1e-10, atol=1e-12)
    assert 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum() < 1e-6


def test_thermal_state():
    assert np.allclose(dyn.thermal_state(0, 4), np.diag([1, 0, 0, 0]))
    rho = dyn.thermal_state(0.05, 30)
    assert rho[0, 0].real == pytest.approx(1 / 1.05, abs=1e-9)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.trace(rho @ fock.number(30)).real == pytest.approx(0.05, abs=1e-4)


def test_lamb_dicke_order_one_rwa_matches_control():
    n = 10
    params = LambDickeParams(taylor_order=1)
    omega = OMEGA
    h_ld = dyn.lamb_dicke_hamiltonian(0.0, 0.3, -1.1, params, n, omega, omega, rwa=True)
    h = dyn.control_hamiltonian(0.3, -1.1, omega, omega, n)
    assert np.max(np.abs(h_ld - h)) < 1e-12 * omega
    assert np.allclose(h_ld, h_ld.conj().T)


def test_lamb_dicke_full_is_hermitian():
    h = dyn.lamb_dicke_hamiltonian(3.7e-6, 0.3, -1.1, LambDickeParams(), 10, OMEGA, OMEGA, rwa=False)
    assert np.allclose(h, h.conj().T, atol=1e-9 * OMEGA)


def test_lamb_dicke_propagation_close_to_ideal_and_converged():
    wf = random_waveform(6, n_seg=4, duration=100e-6)
    psi = dyn.ground_hybrid(12)
    ideal = dyn.propagate_unitary(wf, psi)
    out = dyn.propagate_lamb_dicke(wf, LambDickeParams(), psi)
    finer = dyn.propagate_lamb_dicke(wf, LambDickeParams(), psi, steps_per_period=40)
    # the off-resonant carrier and higher orders cost about a percent here
    assert abs(np.vdot(ideal, out)) ** 2 > 0.97
    assert np.linalg.norm(out - finer) < 1e-6
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-6)


def test_waveform_json_roundtrip(tmp_path):
    wf = random_waveform(7)
    wf.save(tmp_path / "w.json")
    back = Waveform.load(tmp_path / "w.json")
    assert back == wf
    assert np.array_equal(back.phi_r, wf.phi_r) and np.array_equal(back.dt, wf.dt)
