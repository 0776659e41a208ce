import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from bosonforge import fock, targets
from bosonforge import tomography as tm
from bosonforge.dynamics import NoiseModel
from bosonforge.targets import BinomialSpec, GkpSpec, Lattice
from bosonforge.waveform import TWO_PI

BETAS = np.array([0.0, 0.4, 0.3 + 0.9j, -1.2 + 0.5j, 2.0j, -0.8 - 1.6j])


def test_vacuum_chi():
    vac = fock.fock_state(0, 40)
    assert tm.chi_exact(vac, 0.0) == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(tm.chi_exact(vac, BETAS), np.exp(-np.abs(BETAS) ** 2 / 2), atol=1e-12)


def test_fock_one_chi():
    one = fock.fock_state(1, 40)
    b2 = np.abs(BETAS) ** 2
    assert np.allclose(tm.chi_exact(one, BETAS), (1 - b2) * np.exp(-b2 / 2), atol=1e-12)


@pytest.mark.parametrize("r", [0.3, 1.0])
def test_squeezed_chi_closed_form(r):
    # S†D(β)S = D(β cosh r + β* sinh r) for this squeeze convention
    psi = targets.squeezed_vacuum(r, 200)
    bp = BETAS * np.cosh(r) + np.conj(BETAS) * np.sinh(r)
    assert np.allclose(tm.chi_exact(psi, BETAS), np.exp(-np.abs(bp) ** 2 / 2), atol=1e-8)


def test_sdf_zero_displacement_reads_one():
    g = tm.sdf_measure(fock.fock_state(3, 10), [0.0], hybrid=False)
    assert g.re_chi[0] == pytest.approx(1.0, abs=1e-12)


def test_sdf_noiseless_matches_exact():
    psi = targets.binomial_state(BinomialSpec(2, 2, "-Z"), 20)
    betas = tm.quadrant_points(7, 3.0)
    g = tm.sdf_measure(psi, betas, hybrid=False)
    assert np.allclose(g.re_chi, np.real(tm.chi_exact(psi, betas)), atol=1e-8)


def test_sdf_shot_noise_statistics():
    vac = fock.fock_state(0, 20)
    betas = tm.quadrant_points(5, 2.0)
    shots = 100_000
    g = tm.sdf_measure(vac, betas, tm.SdfConfig(shots=shots), rng_seed=11, hybrid=False)
    exact = np.exp(-np.abs(betas) ** 2 / 2)
    sigma = np.sqrt(np.maximum(1 - exact**2, 1e-12) / shots)
    assert np.all(np.abs(g.re_chi - exact) <= 3 * sigma + 1e-12)
    assert np.all(g.m_total == shots)


def test_sdf_noise_reduces_contrast():
    psi = targets.squeezed_vacuum(0.8, 60)
    betas = np.array([1.0j, 2.0j, 2.5j])
    clean = tm.sdf_measure(psi, betas, hybrid=False).re_chi
    noisy = tm.sdf_measure(psi, betas, tm.SdfConfig(noise=NoiseModel(40.0, TWO_PI * 20), sim_dim=80), hybrid=False).re_chi
    assert np.all(np.abs(noisy) < np.abs(clean))


def test_noisy_sdf_routes_agree():
    """Heisenberg-picture readout against a full master-equation run."""
    psi = fock.hybrid_state(fock.DOWN, targets.binomial_state(BinomialSpec(1, 1, "+Z"), 16))
    cfg = tm.SdfConfig(noise=NoiseModel(18.0, TWO_PI * 18), sim_dim=24)
    betas = np.array([0.5 + 0.2j, -0.7 + 1.0j, 1.4j])
    fast = tm.sdf_measure(psi, betas, cfg).re_chi
    slow = np.array([tm.sdf_measure_direct(psi, b, cfg) for b in betas])
    assert np.allclose(fast, slow, atol=1e-6)


def test_symmetrize_counts_and_values():
    psi = targets.gkp_state(GkpSpec(Lattice.SQUARE, 0, 0.301), 80)
    q = tm.exact_grid(psi, tm.quadrant_points(25, 3.0, tm.grid_scale(GkpSpec())))
    full = tm.symmetrize(q)
    assert len(full) == 49**2
    # parity-even real state: Re χ is even under every reflection
    assert np.allclose(full.re_chi, np.real(tm.chi_exact(psi, full.betas)), atol=1e-10)


def test_restrict_inverts_symmetrize():
    q = tm.exact_grid(fock.fock_state(2, 10), tm.quadrant_points(6, 2.0))
    back = tm.restrict(tm.symmetrize(q))
    order = np.lexsort((back.betas.imag, back.betas.real))
    ref = np.lexsort((q.betas.imag, q.betas.real))
    assert np.allclose(back.betas[order], q.betas[ref])
    assert np.allclose(back.re_chi[order], q.re_chi[ref])


def test_symmetrize_rejects_bad_input():
    with pytest.raises(tm.SymmetryViolation):
        tm.symmetrize(tm.ChiGrid([1 + 1j], [0.2], meta={"asymmetric": True}))
    with pytest.raises(tm.SymmetryViolation):
        tm.symmetrize(tm.ChiGrid([-1 + 1j], [0.2]))


def test_value_at_missing_point():
    g = tm.ChiGrid([0.0, 1.0], [1.0, 0.5])
    assert g.value_at(1.0) == 0.5
    with pytest.raises(tm.MissingPoint):
        g.value_at(0.5)


def test_grid_csv_roundtrip(tmp_path):
    g = tm.sdf_measure(fock.fock_state(1, 8), tm.quadrant_points(4, 2.0), tm.SdfConfig(shots=300), hybrid=False)
    g.to_csv(tmp_path / "g.csv")
    back = tm.ChiGrid.from_csv(tmp_path / "g.csv")
    assert np.array_equal(back.betas, g.betas) and np.array_equal(back.re_chi, g.re_chi)
    assert np.array_equal(back.m_bright, g.m_bright)


def test_measurement_matrix_matches_chi():
    rng = np.random.default_rng(4)
    n = 6
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    betas = rng.normal(size=9) + 1j * rng.normal(size=9)
    a = tm.measurement_matrix(betas, n)
    x = tm._herm_to_vec(rho, n, tm._hermitian_basis_map(n))
    assert np.allclose(a @ x, np.real(tm.chi_values(rho, betas)), atol=1e-12)


def test_project_density():
    rng = np.random.default_rng(5)
    h = rng.normal(size=(7, 7))
    rho = tm.project_density(h + h.T)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    good = fock.ket_to_dm(fock.coherent_state(0.5, 7))
    good /= np.trace(good)
    assert np.allclose(tm.project_density(good), good, atol=1e-12)


def test_reconstruct_binomial():
    psi = targets.binomial_state(BinomialSpec(1, 1, "+Z"), 30)
    full = tm.symmetrize(tm.exact_grid(psi, tm.default_quadrant(BinomialSpec(1, 1, "+Z"))))
    rec = tm.reconstruct_density(full, 30)
    assert fock.state_fidelity(rec.rho, psi) >= 0.999
    assert np.trace(rec.rho).real == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.eigvalsh(rec.rho).min() > -1e-9


def test_reconstruct_vacuum():
    vac = fock.fock_state(0, 20)
    full = tm.symmetrize(tm.exact_grid(vac, tm.quadrant_points(15, 3.0)))
    rec = tm.reconstruct_density(full, 20)
    assert fock.state_fidelity(rec.rho, vac) >= 0.9999


def test_reconstruct_ill_posed():
    rng = np.random.default_rng(0)
    betas = tm.quadrant_points(8, 3.0)
    grid = tm.ChiGrid(betas, rng.uniform(-1, 1, betas.size))
    with pytest.raises(tm.IllPosed):
        tm.reconstruct_density(grid, 10)


def test_bootstrap_zero_variance_and_errors():
    g = tm.ChiGrid([0.0, 1.0], [1.0, 1.0], [50, 50], [50, 50])
    out = tm.bootstrap(g, lambda x: float(x.re_chi.mean()), n_resamples=20)
    assert out["sigma"] == 0.0 and out["mean"] == 1.0
    with pytest.raises(tm.MissingShots):
        tm.bootstrap(tm.ChiGrid([0.0], [1.0]), lambda x: 0.0)


def test_bootstrap_binomial_sigma():
    # p = 1/2 with 400 draws: σ of 2p̂-1 is 1/√400
    g = tm.ChiGrid([0.3], [0.0], [200], [400])
    out = tm.bootstrap(g, lambda x: float(x.re_chi[0]), n_resamples=400, resample_size=400, seed=2)
    assert out["sigma"] == pytest.approx(0.05, rel=0.15)


def test_wigner_known_values():
    assert tm.wigner(fock.fock_state(0, 20), [0.0], [0.0])[0, 0] == pytest.approx(1 / np.pi, abs=1e-12)
    assert tm.wigner(fock.fock_state(1, 20), [0.0], [0.0])[0, 0] == pytest.approx(-1 / np.pi, abs=1e-12)


def test_wigner_normalised():
    rho = fock.ket_to_dm(targets.binomial_state(BinomialSpec(2, 2, "+Z"), 20))
    x = np.linspace(-7, 7, 141)
    w = tm.wigner(rho, x, x)
    h = x[1] - x[0]
    assert w.sum() * h * h == pytest.approx(1.0, abs=1e-6)


def test_wigner_chi_duality():
    psi = targets.binomial_state(BinomialSpec(1, 1, "+Z"), 30)
    x = np.linspace(-3, 3, 13)
    direct = tm.wigner(psi, x, x)
    via = tm.wigner_from_chi(lambda b: tm.chi_values(psi, b), x, x, beta_extent=6.0, n_beta=121)
    rms = np.sqrt(np.mean((direct - via) ** 2))
    assert rms <= 0.02 * np.abs(direct).max()


def test_gkp_marginal_peaks():
    psi = targets.gkp_state(GkpSpec(Lattice.SQUARE, 0, 0.247), 150)
    x = np.linspace(-18, 18, 3601)
    px, pp = tm.marginals(psi, x)
    h = x[1] - x[0]
    assert px.sum() * h == pytest.approx(1.0, abs=1e-6)
    ix, _ = find_peaks(px, height=0.05 * px.max())
    ip, _ = find_peaks(pp, height=0.05 * pp.max())
    sp = np.sqrt(np.pi)
    assert np.allclose(x[ix] / sp, np.round(x[ix] / (2 * sp)) * 2, atol=0.05)
    assert np.allclose(x[ip] / sp, np.round(x[ip] / sp), atol=0.05)
    assert len(ip) > len(ix)


def test_wigner_csv(tmp_path):
    x = np.array([-1.0, 0.0, 1.0])
    w = tm.wigner(fock.fock_state(0, 10), x, x)
    tm.wigner_to_csv(tmp_path / "w.csv", x, x, w)
    rows = np.loadtxt(tmp_path / "w.csv", delimiter=",", skiprows=1)
    assert rows.shape == (9, 3)
    assert np.allclose(rows[:, 2], w.ravel())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_chi_magnitude_bounded(seed):
    rng = np.random.default_rng(seed)
    n = 12
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    betas = rng.normal(scale=2.0, size=20) + 1j * rng.normal(scale=2.0, size=20)
    assert np.all(np.abs(tm.chi_values(rho, betas)) <= 1 + 1e-12)


def test_even_input_reconstructs_without_odd_population():
    psi = targets.binomial_state(BinomialSpec(2, 2, "+Z"), 30)
    full = tm.symmetrize(tm.exact_grid(psi, tm.quadrant_points(25, 3.0)))
    rho = tm.reconstruct_density(full, 30).rho
    assert np.real(np.diag(rho)[1::2]).sum() < 1e-2


def test_residual_contractive_under_refinement():
    # the coherent state has weight beyond the reconstruction space, so the residual is nonzero
    psi = fock.coherent_state(2.2, 60)
    res = []
    for n in (7, 13, 25):
        grid = tm.symmetrize(tm.exact_grid(psi, tm.quadrant_points(n, 3.0)))
        res.append(tm.reconstruct_density(grid, 8, ill_posed_residual=1.0).residual)
    assert res[0] > 1e-3
    assert np.all(np.diff(res) <= 1e-6)


def test_bootstrap_matches_independent_datasets():
    """Bootstrap σ against the spread over 20 fresh simulated datasets at 500 shots/point."""
    psi = targets.binomial_state(BinomialSpec(1, 1, "+Z"), 16)
    quad = tm.quadrant_points(12, 3.0)
    full_betas = tm.symmetrize(tm.ChiGrid(quad, np.zeros(quad.size))).betas
    a = tm.measurement_matrix(full_betas, 16)

    def fidelity(q):
        rec = tm.reconstruct_density(tm.symmetrize(q), 16, a_matrix=a, max_iter=400, tol=1e-8)
        return fock.state_fidelity(rec.rho, psi)

    def linear(q):
        return float(q.re_chi[5])

    cfg = tm.SdfConfig(shots=500)
    fresh = [tm.sdf_measure(psi, quad, cfg, rng_seed=100 + k, hybrid=False) for k in range(20)]
    data = tm.sdf_measure(psi, quad, cfg, rng_seed=1, hybrid=False)
    spread = np.std([linear(g) for g in fresh], ddof=1)
    boot = tm.bootstrap(data, linear, n_resamples=100, seed=3)
    assert 0.5 * spread <= boot["sigma"] <= 1.5 * spread
    # fidelity is quadratic near its maximum, so resampling noisy data inflates σ; it must not shrink
    spread_f = np.std([fidelity(g) for g in fresh], ddof=1)
    boot_f = tm.bootstrap(data, fidelity, n_resamples=40, seed=3)
    assert boot_f["sigma"] >= 0.5 * spread_f
