"""Characteristic-function tomography: SDF measurement simulation, grids, reconstruction, Wigner functions.

Sign convention: the qubit is flipped to |↑⟩ before the state-dependent force,
so an undisturbed qubit reads bright (σ_z = +1) and re_chi = 2·m_bright/m_total - 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import fock
from .dynamics import IntegratorError, NoiseModel, control_hamiltonian, propagate_master
from .targets import GkpSpec, Lattice, SqueezeSpec
from .waveform import TWO_PI, Waveform


class SymmetryViolation(ValueError):
    pass


class MissingShots(ValueError):
    pass


class MissingPoint(KeyError):
    pass


class IllPosed(RuntimeError):
    pass


CSV_HEADER = ["re_beta", "im_beta", "re_chi", "m_bright", "m_total"]


@dataclass
class ChiGrid:
    """Phase-space points β (raw units) with Re χ(β) and optional shot counts."""

    betas: np.ndarray
    re_chi: np.ndarray
    m_bright: np.ndarray | None = None
    m_total: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=complex).ravel()
        self.re_chi = np.asarray(self.re_chi, dtype=float).ravel()
        if self.betas.shape != self.re_chi.shape:
            raise ValueError("betas and re_chi must have the same length")
        if self.m_bright is not None:
            self.m_bright = np.asarray(self.m_bright, dtype=np.int64).ravel()
            self.m_total = np.asarray(self.m_total, dtype=np.int64).ravel()

    def __len__(self):
        return self.betas.size

    @property
    def has_shots(self) -> bool:
        return self.m_bright is not None

    def value_at(self, beta, tol: float = 1e-9) -> float:
        """Re χ at an exact grid point (no interpolation)."""
        dist = np.abs(self.betas - complex(beta))
        i = int(np.argmin(dist)) if dist.size else -1
        if i < 0 or dist[i] > tol * max(1.0, abs(beta)):
            raise MissingPoint(f"no grid point at beta = {complex(beta):.6g}")
        return float(self.re_chi[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for i, b in enumerate(self.betas):
                mb = "" if self.m_bright is None else int(self.m_bright[i])
                mt = "" if self.m_total is None else int(self.m_total[i])
                w.writerow([repr(float(b.real)), repr(float(b.imag)), repr(float(self.re_chi[i])), mb, mt])

    @classmethod
    def from_csv(cls, path) -> "ChiGrid":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        betas = [float(r["re_beta"]) + 1j * float(r["im_beta"]) for r in rows]
        chi = [float(r["re_chi"]) for r in rows]
        shots = all(r.get("m_bright") not in (None, "") for r in rows) and rows
        mb = [int(r["m_bright"]) for r in rows] if shots else None
        mt = [int(r["m_total"]) for r in rows] if shots else None
        return cls(betas, chi, mb, mt)


# --- grids ---------------------------------------------------------------------------


def grid_scale(spec) -> float:
    """Factor converting normalised grid coordinates β̃ to raw β."""
    if isinstance(spec, GkpSpec):
        return math.sqrt(2 * math.pi) if spec.lattice is Lattice.SQUARE else math.sqrt(math.sqrt(3) * math.pi)
    return 1.0


def grid_extent(spec) -> float:
    return 3.5 if isinstance(spec, SqueezeSpec) else 3.0


def quadrant_points(n: int = 25, extent: float = 3.0, scale: float = 1.0) -> np.ndarray:
    """n×n uniform points over [0, extent]² in normalised units, returned as raw β."""
    u = np.linspace(0.0, extent, n)
    x, y = np.meshgrid(u, u, indexing="ij")
    return scale * (x + 1j * y).ravel()


def default_quadrant(spec, n: int = 25) -> np.ndarray:
    return quadrant_points(n, grid_extent(spec), grid_scale(spec))


def _reflections(betas):
    return [betas, -betas, np.conj(betas), -np.conj(betas)]


def symmetrize(quadrant: ChiGrid) -> ChiGrid:
    """Reflect a positive-quadrant grid across both phase-space axes.

    Points on an axis are not duplicated, so an n×n quadrant becomes (2n-1)².
    """
    if quadrant.meta.get("asymmetric"):
        raise SymmetryViolation("grid is flagged as asymmetric; reflection is not valid")
    if np.any(quadrant.betas.real < -1e-12) or np.any(quadrant.betas.imag < -1e-12):
        raise SymmetryViolation("symmetrize expects points in the closed positive quadrant")
    seen = {}
    out_b, out_c, out_mb, out_mt, src = [], [], [], [], []
    for refl in _reflections(quadrant.betas):
        for i, b in enumerate(refl):
            key = (round(b.real, 10) + 0.0, round(b.imag, 10) + 0.0)
            if key in seen:
                continue
            seen[key] = len(out_b)
            out_b.append(b)
            out_c.append(quadrant.re_chi[i])
            src.append(i)
            if quadrant.has_shots:
                out_mb.append(quadrant.m_bright[i])
                out_mt.append(quadrant.m_total[i])
    meta = dict(quadrant.meta, symmetric=True, source=src)
    if quadrant.has_shots:
        return ChiGrid(out_b, out_c, out_mb, out_mt, meta)
    return ChiGrid(out_b, out_c, meta=meta)


def restrict(grid: ChiGrid) -> ChiGrid:
    """Keep only the closed positive quadrant."""
    keep = (grid.betas.real >= -1e-12) & (grid.betas.imag >= -1e-12)
    mb = grid.m_bright[keep] if grid.has_shots else None
    mt = grid.m_total[keep] if grid.has_shots else None
    meta = {k: v for k, v in grid.meta.items() if k not in ("symmetric", "source")}
    return ChiGrid(grid.betas[keep], grid.re_chi[keep], mb, mt, meta)


# --- exact characteristic function ------------------------------------------------


def _oscillator_dm(state) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return fock.ket_to_dm(state)
    return state


def chi_values(rho, betas, chunk: int = 256) -> np.ndarray:
    """χ(β) = Tr(ρ D(β)) for an oscillator density matrix (or ket) at many points."""
    rho = _oscillator_dm(rho)
    betas = np.asarray(betas, dtype=complex).ravel()
    n = rho.shape[0]
    out = np.empty(betas.size, dtype=complex)
    rt = rho.T
    for s in range(0, betas.size, chunk):
        d = fock.displacement_stack(betas[s : s + chunk], n)
        out[s : s + chunk] = np.einsum("kmn,mn->k", d, rt)
    return out


def chi_exact(state, beta):
    """Tr(ρ D(β)) using exact displacement matrix elements (scalar or array β)."""
    scalar = np.ndim(beta) == 0
    vals = chi_values(state, np.atleast_1d(beta))
    return complex(vals[0]) if scalar else vals


def exact_grid(state, betas, meta: dict | None = None) -> ChiGrid:
    return ChiGrid(betas, np.real(chi_values(state, betas)), meta=dict(meta or {}))


# --- SDF measurement ----------------------------------------------------------------


@dataclass(frozen=True)
class SdfConfig:
    omega_sdf: float = TWO_PI * 2000
    noise: NoiseModel = NoiseModel()
    shots: int | None = None  # None: infinite-shot expectation values
    sim_dim: int | None = None  # oscillator dimension used when noise is on

    def __post_init__(self):
        if self.omega_sdf <= 0:
            raise ValueError("omega_sdf must be positive")


def sdf_phases(beta: complex) -> tuple[float, float, float]:
    """(duration, φ_r, φ_b) of the SDF pulse that measures Re χ(β)."""
    t = abs(beta)
    phi_m = -(np.angle(beta) + np.pi / 2) if beta != 0 else 0.0
    return t, phi_m, -phi_m


def _as_hybrid_dm(state) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return fock.ket_to_dm(state)
    return state


def _flipped_minus_plus(rho_h) -> np.ndarray:
    """⟨-|X ρ X|+⟩ on the oscillator, with |±⟩ = (|↓⟩ ± |↑⟩)/√2."""
    n = rho_h.shape[0] // 2
    dd, du = rho_h[:n, :n], rho_h[:n, n:]
    ud, uu = rho_h[n:, :n], rho_h[n:, n:]
    # X swaps ↓ and ↑; then ⟨-|·|+⟩ = (ρ_dd + ρ_du - ρ_ud - ρ_uu)/2 of the flipped state
    return 0.5 * (uu + ud - du - dd)


def _sigma_z_exact(rho_h, betas) -> np.ndarray:
    """Noiseless ⟨σ_z⟩ = -2 Re Tr(ρ_{-+} D(-β)) with exact displacement elements."""
    blk = _flipped_minus_plus(rho_h)
    return -2 * np.real(chi_values(blk, -np.asarray(betas)))


def _sdf_generators(n, omega, delta):
    """K_± blocks of the SDF Hamiltonian (φ_r = φ_b = 0) in the σ_x basis, plus δ â†â."""
    h = control_hamiltonian(0.0, 0.0, omega, omega, n)
    plus = np.kron(np.array([1, 1]) / np.sqrt(2), np.eye(n)).T  # (2n, n)
    minus = np.kron(np.array([1, -1]) / np.sqrt(2), np.eye(n)).T
    num = np.diag(np.arange(n, dtype=float))
    k_p = plus.T @ h @ plus + delta * num
    k_m = minus.T @ h @ minus + delta * num
    return k_p, k_m


def heisenberg_sdf_operators(n, omega, noise: NoiseModel, times, rtol=1e-9, atol=1e-11):
    """M(t) with Tr(ρ_{-+}(t)) = Tr(M(t) ρ_{-+}(0)) for the noisy SDF along φ_m = 0.

    dM/dt = -i M K₋ + i K₊ M + Γ(n M n - ½(M n² + n² M)), M(0) = I.
    """
    k_p, k_m = _sdf_generators(n, omega, noise.delta)
    nd = np.arange(n, dtype=float)
    deph = noise.gamma * (np.outer(nd, nd) - 0.5 * (nd[:, None] ** 2 + nd[None, :] ** 2))

    def rhs(_t, y):
        m = y.reshape(n, n)
        return (-1j * (m @ k_m) + 1j * (k_p @ m) + deph * m).ravel()

    times = np.asarray(times, dtype=float)
    uniq = np.unique(times)
    out = {}
    if uniq.size and uniq[-1] > 0:
        sol = solve_ivp(rhs, (0.0, uniq[-1]), np.eye(n, dtype=complex).ravel(), method="DOP853",
                        t_eval=uniq, rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegratorError(sol.message)
        for i, t in enumerate(sol.t):
            out[float(t)] = sol.y[:, i].reshape(n, n)
    for t in uniq:
        if t == 0:
            out[0.0] = np.eye(n, dtype=complex)
    return out


def _sigma_z_noisy(rho_h, betas, cfg: SdfConfig) -> np.ndarray:
    n = rho_h.shape[0] // 2
    blk = _flipped_minus_plus(rho_h)
    if cfg.sim_dim and cfg.sim_dim > n:
        blk = fock.pad_state(blk, cfg.sim_dim)
        n = cfg.sim_dim
    betas = np.asarray(betas, dtype=complex)
    times = np.abs(betas) / cfg.omega_sdf
    ops = heisenberg_sdf_operators(n, cfg.omega_sdf, cfg.noise, times)
    out = np.empty(betas.size)
    nd = np.arange(n)
    for i, b in enumerate(betas):
        _, phi_m, _ = sdf_phases(b)
        # the Hamiltonian at φ_m is R H R† with R = e^{-iφ_m n}; rotate the state instead
        r = np.exp(-1j * phi_m * nd)
        rot = np.conj(r)[:, None] * blk * r[None, :]
        out[i] = -2 * np.real(np.sum(ops[float(times[i])].T * rot))
    return out


def sdf_expectation(state, betas, cfg: SdfConfig = SdfConfig()) -> np.ndarray:
    """Infinite-shot ⟨σ_z⟩ after flip + SDF for each β.

    ``state`` is a hybrid ket/density matrix (2N) or an oscillator state,
    which is taken to be |↓⟩⊗ψ.
    """
    state = np.asarray(state, dtype=complex)
    hybrid = _as_hybrid_dm(state)
    if hybrid.shape[0] % 2 or state.ndim == 1 and state.size % 2:
        raise fock.DimensionMismatch("hybrid input must have even dimension")
    betas = np.atleast_1d(np.asarray(betas, dtype=complex))
    noisy = cfg.noise.gamma > 0 or cfg.noise.delta != 0
    if noisy:
        return _sigma_z_noisy(hybrid, betas, cfg)
    return _sigma_z_exact(hybrid, betas)


def embed_down(osc_state) -> np.ndarray:
    """|↓⟩⊗ψ (or |↓⟩⟨↓|⊗ρ) from an oscillator state."""
    s = np.asarray(osc_state, dtype=complex)
    if s.ndim == 1:
        return fock.hybrid_state(fock.DOWN, s)
    return np.kron(np.diag([1.0, 0.0]), s)


def sdf_measure(state, betas, cfg: SdfConfig = SdfConfig(), rng_seed: int | None = 0, hybrid: bool = True) -> ChiGrid:
    """Simulated SDF readout at every β; shots drawn binomially when cfg.shots is set."""
    if not hybrid:
        state = embed_down(state)
    betas = np.atleast_1d(np.asarray(betas, dtype=complex))
    sz = np.clip(sdf_expectation(state, betas, cfg), -1.0, 1.0)
    if not cfg.shots:
        return ChiGrid(betas, sz, meta={"shots": None})
    rng = np.random.default_rng(rng_seed)
    p = 0.5 * (1 + sz)
    mb = rng.binomial(cfg.shots, p)
    mt = np.full(betas.size, cfg.shots)
    return ChiGrid(betas, 2 * mb / mt - 1, mb, mt, meta={"shots": int(cfg.shots)})


def sdf_measure_direct(state, beta, cfg: SdfConfig = SdfConfig()) -> float:
    """Single-point ⟨σ_z⟩ from a full qubit-oscillator master-equation run (reference route)."""
    rho = _as_hybrid_dm(state)
    n = rho.shape[0] // 2
    if cfg.sim_dim and cfg.sim_dim > n:
        big = np.zeros((2 * cfg.sim_dim, 2 * cfg.sim_dim), dtype=complex)
        m = cfg.sim_dim
        big[:n, :n], big[:n, m : m + n] = rho[:n, :n], rho[:n, n:]
        big[m : m + n, :n], big[m : m + n, m : m + n] = rho[n:, :n], rho[n:, n:]
        rho, n = big, m
    x = fock.embed_hybrid(fock.SIGMA_X, fock.identity(n))
    rho = x @ rho @ x
    t, pr, pb = sdf_phases(complex(beta))
    if t > 0:
        hz = cfg.omega_sdf / TWO_PI
        wf = Waveform([t / cfg.omega_sdf], [pr], [pb], hz, hz)
        rho = propagate_master(wf, cfg.noise, rho)
    return float(np.real(fock.expectation(fock.embed_hybrid(fock.SIGMA_Z, fock.identity(n)), rho)))


# --- reconstruction -----------------------------------------------------------------


def _hermitian_basis_map(n: int):
    """Index arrays for x ∈ R^{n²} ↔ Hermitian ρ (diagonal, then Re/Im of the upper triangle)."""
    iu = np.triu_indices(n, 1)
    return iu


def _vec_to_herm(x, n, iu):
    rho = np.zeros((n, n), dtype=complex)
    m = iu[0].size
    rho[np.diag_indices(n)] = x[:n]
    upper = (x[n : n + m] + 1j * x[n + m :]) / np.sqrt(2)
    rho[iu] = upper
    rho[(iu[1], iu[0])] = np.conj(upper)
    return rho


def _herm_to_vec(rho, n, iu):
    upper = rho[iu] * np.sqrt(2)
    return np.concatenate([np.real(np.diag(rho)), upper.real, upper.imag])


def measurement_matrix(betas, n: int, chunk: int = 128) -> np.ndarray:
    """Real (K, n²) matrix with (A x)_k = Tr(ρ(x) (D(β_k) + D(β_k)†)/2) = Re χ(β_k).

    The coordinates are orthonormal for the Frobenius inner product, so the
    least-squares gradient in x maps directly to a Hermitian gradient.
    """
    betas = np.asarray(betas, dtype=complex).ravel()
    iu = _hermitian_basis_map(n)
    a = np.empty((betas.size, n * n))
    for s in range(0, betas.size, chunk):
        d = fock.displacement_stack(betas[s : s + chunk], n)
        h = 0.5 * (d + np.conj(np.transpose(d, (0, 2, 1))))
        # Tr(ρ H) = Σ diag(ρ)diag(H) + 2 Re Σ_{m<n} ρ_mn H_nm
        diag = np.real(np.einsum("kii->ki", h))
        hu = h[:, iu[1], iu[0]]  # H_nm for m < n
        a[s : s + chunk, :n] = diag
        a[s : s + chunk, n : n + iu[0].size] = np.sqrt(2) * hu.real
        a[s : s + chunk, n + iu[0].size :] = -np.sqrt(2) * hu.imag
    return a


def project_density(h: np.ndarray) -> np.ndarray:
    """Frobenius projection of a Hermitian matrix onto {ρ ⪰ 0, Tr ρ = 1}."""
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, u.size + 1)
    cond = u - css / k > 0
    rho_idx = k[cond][-1]
    theta = css[cond][-1] / rho_idx
    lam = np.maximum(w - theta, 0.0)
    return (v * lam) @ v.conj().T


@dataclass
class Reconstruction:
    rho: np.ndarray
    residual: float  # relative ℓ2 residual ‖Aρ - y‖ / ‖y‖
    iterations: int
    dim: int
    history: list = field(default_factory=list)


def reconstruct_density(
    grid: ChiGrid,
    dim: int,
    max_iter: int = 3000,
    tol: float = 1e-10,
    a_matrix: np.ndarray | None = None,
    rho0: np.ndarray | None = None,
    ill_posed_residual: float = 0.2,
) -> Reconstruction:
    """Least squares ‖Re χ_ρ(β) - χ_data‖₂ over unit-trace PSD ρ of dimension ``dim``.

    Solved by accelerated projected gradient (FISTA) with an exact projection
    onto the set of density matrices.
    """
    n = int(dim)
    if len(grid) < n * n / 4:
        import warnings

        warnings.warn(f"{len(grid)} points for a {n}-level reconstruction may be ill-posed", RuntimeWarning, stacklevel=2)
    a = measurement_matrix(grid.betas, n) if a_matrix is None else a_matrix
    y = grid.re_chi
    iu = _hermitian_basis_map(n)
    # Lipschitz constant of ∇½‖Ax - y‖² by power iteration
    v = np.random.default_rng(0).standard_normal(a.shape[1])
    for _ in range(50):
        v = a.T @ (a @ v)
        v /= np.linalg.norm(v)
    lip = float(np.linalg.norm(a.T @ (a @ v))) * 1.01
    step = 1.0 / lip
    rho = np.eye(n, dtype=complex) / n if rho0 is None else project_density(rho0)
    x = _herm_to_vec(rho, n, iu)
    z, t = x.copy(), 1.0
    ynorm = max(np.linalg.norm(y), 1e-300)
    prev = np.inf
    hist = []
    it = 0
    for it in range(1, max_iter + 1):
        g = a.T @ (a @ z - y)
        x_new = _herm_to_vec(project_density(_vec_to_herm(z - step * g, n, iu)), n, iu)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = x_new + ((t - 1) / t_new) * (x_new - x)
        # restart momentum when the objective goes up
        res = float(np.linalg.norm(a @ x_new - y))
        if res > prev:
            z, t_new = x_new.copy(), 1.0
        x, t = x_new, t_new
        hist.append(res / ynorm)
        if abs(prev - res) < tol * ynorm:
            break
        prev = res
    rho = _vec_to_herm(x, n, iu)
    rho = 0.5 * (rho + rho.conj().T)
    res = float(np.linalg.norm(a @ x - y))
    resid = res / ynorm
    # with shot records, only the part above the expected binomial noise floor counts
    floor = float(np.sum(np.clip(1 - y**2, 0, None) / grid.m_total)) if grid.has_shots else 0.0
    excess = math.sqrt(max(res**2 - floor, 0.0)) / ynorm
    if excess > ill_posed_residual:
        raise IllPosed(f"reconstruction residual {excess:.3f} above the noise floor exceeds {ill_posed_residual}")
    return Reconstruction(rho, resid, it, n, hist)


def reconstruct_escalating(grid: ChiGrid, target, dims=(30, 40, 50, 60), tol: float = 1e-3, **kw):
    """Increase the reconstruction dimension until the target fidelity changes by < tol."""
    target = np.asarray(target, dtype=complex)
    prev_f, rec = None, None
    for d in dims:
        rec = reconstruct_density(grid, d, **kw)
        t = fock.pad_state(target[:d], d) if target.size < d else target[:d]
        f = fock.state_fidelity(rec.rho, t)
        if prev_f is not None and abs(f - prev_f) < tol:
            return rec, f
        prev_f = f
    return rec, prev_f


# --- bootstrap ---------------------------------------------------------------------


def bootstrap(grid: ChiGrid, metric_fn, n_resamples: int = 100, resample_size: int = 400, seed: int = 0) -> dict:
    """Spread of ``metric_fn`` over synthetic grids resampled from the shot records.

    Each synthetic value draws ``resample_size`` outcomes with replacement from
    the point's recorded outcomes.  Pass a quadrant grid when the metric
    symmetrises internally so mirrored points are not resampled independently.
    """
    if not grid.has_shots:
        raise MissingShots("bootstrap needs per-point shot records")
    rng = np.random.default_rng(seed)
    p = grid.m_bright / np.maximum(grid.m_total, 1)
    vals = []
    for _ in range(n_resamples):
        mb = rng.binomial(resample_size, p)
        g = ChiGrid(grid.betas, 2 * mb / resample_size - 1, mb, np.full(mb.size, resample_size), dict(grid.meta))
        vals.append(metric_fn(g))
    vals = np.asarray(vals, dtype=float)
    return {"mean": float(vals.mean()), "sigma": float(vals.std(ddof=1)) if vals.size > 1 else 0.0, "values": vals}


# --- Wigner function ---------------------------------------------------------------


def wigner(rho, x, p, chunk: int = 256) -> np.ndarray:
    """W(x, p) = (1/π) Tr(ρ D(2α) Π), α = (x + ip)/√2, on the outer grid x × p."""
    rho = _oscillator_dm(rho)
    n = rho.shape[0]
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    xx, pp = np.meshgrid(x, p, indexing="ij")
    alphas = ((xx + 1j * pp) / np.sqrt(2)).ravel()
    par = (-1.0) ** np.arange(n)
    # Tr(ρ D Π) = Σ_{mn} D_mn (-1)^n ρ_nm
    m = rho.T * par[None, :]
    out = np.empty(alphas.size)
    for s in range(0, alphas.size, chunk):
        d = fock.displacement_stack(2 * alphas[s : s + chunk], n)
        out[s : s + chunk] = np.real(np.einsum("kmn,mn->k", d, m))
    return out.reshape(xx.shape) / np.pi


def wigner_from_chi(chi_fn, x, p, beta_extent: float, n_beta: int = 161) -> np.ndarray:
    """W(α) = (1/π²) ∫ χ(β) e^{αβ* - α*β} d²β by midpoint quadrature over |Re β|, |Im β| ≤ extent."""
    u = np.linspace(-beta_extent, beta_extent, n_beta)
    h = u[1] - u[0]
    br, bi = np.meshgrid(u, u, indexing="ij")
    betas = (br + 1j * bi).ravel()
    chi = np.asarray(chi_fn(betas))
    xx, pp = np.meshgrid(np.asarray(x, float), np.asarray(p, float), indexing="ij")
    alphas = ((xx + 1j * pp) / np.sqrt(2)).ravel()
    kern = np.exp(np.outer(alphas, np.conj(betas)) - np.outer(np.conj(alphas), betas))
    w = np.real(kern @ chi) * h * h / np.pi**2
    # W in (x, p) carries the Jacobian d²α = dx dp / 2
    return w.reshape(xx.shape) / 2


def marginals(rho, x) -> tuple[np.ndarray, np.ndarray]:
    """Position and momentum distributions P(x), P(p) evaluated on the same grid."""
    from .targets import hermite_functions

    rho = _oscillator_dm(rho)
    n = rho.shape[0]
    h = hermite_functions(n, x)  # ⟨x|n⟩
    px = np.real(np.einsum("mi,mn,ni->i", h, rho, h))
    ph = h * ((-1j) ** np.arange(n))[:, None]  # ⟨p|n⟩ = (-i)^n ⟨x=p|n⟩
    pp = np.real(np.einsum("mi,mn,ni->i", np.conj(ph), rho, ph))
    return px, pp


def wigner_to_csv(path, x, p, w) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "p", "w"])
        for i, xi in enumerate(x):
            for j, pj in enumerate(p):
                wr.writerow([repr(float(xi)), repr(float(pj)), repr(float(w[i, j]))])
