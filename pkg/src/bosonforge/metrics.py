"""State-certification metrics for squeezed, GKP and binomial states."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, least_squares, minimize_scalar

from . import fock
from .targets import GkpSpec, Lattice
from .tomography import ChiGrid, MissingPoint, chi_values, marginals


class GridMismatch(ValueError):
    pass


class FitDivergence(RuntimeError):
    pass


def db_from_delta(delta: float) -> float:
    if delta == 0:
        return math.inf
    if not math.isfinite(delta):
        return -math.inf
    return -10.0 * math.log10(delta**2)


# --- pseudo-fidelity ---------------------------------------------------------------


def pseudo_fidelity(chi_exp: ChiGrid, chi_th: ChiGrid) -> float:
    """Σ χ_exp χ_th / Σ χ_th² over a shared point set."""
    if len(chi_exp) != len(chi_th) or not np.allclose(chi_exp.betas, chi_th.betas, atol=1e-9):
        raise GridMismatch("experimental and theoretical grids must share the same points")
    den = float(np.sum(chi_th.re_chi**2))
    if den == 0:
        raise GridMismatch("theoretical characteristic function vanishes on the grid")
    return float(np.sum(chi_exp.re_chi * chi_th.re_chi) / den)


# --- χ lookups ---------------------------------------------------------------------


def _chi_lookup(source):
    """Callable β-array → χ values, from a density matrix/ket or from exact grid points."""
    if isinstance(source, ChiGrid):
        return lambda betas: np.array([source.value_at(b) for b in np.atleast_1d(betas)], dtype=complex)
    rho = np.asarray(source, dtype=complex)
    return lambda betas: chi_values(rho, np.atleast_1d(betas))


# --- stabilizer squeezing --------------------------------------------------------------


@dataclass
class StabilizerSqueezing:
    delta_x: float
    delta_z: float
    squeezing_x_db: float
    squeezing_z_db: float


def _delta_from_expectation(value: complex, length: float) -> float:
    mag2 = abs(value) ** 2
    if mag2 <= 1e-300:
        return math.inf
    return math.sqrt(max(-math.log(mag2), 0.0)) / (2 * length)


def stabilizer_squeezing(source, spec: GkpSpec) -> StabilizerSqueezing:
    """Δ = √(-log|⟨S⟩|²)/(2|α|) with S_X = D(2α), S_Z = D(2β); +∞ when ⟨S⟩ vanishes."""
    chi = _chi_lookup(source)
    sx, sz = chi(np.array([2 * spec.alpha, 2 * spec.beta]))
    dx = _delta_from_expectation(sx, abs(spec.alpha))
    dz = _delta_from_expectation(sz, abs(spec.beta))
    return StabilizerSqueezing(dx, dz, db_from_delta(dx), db_from_delta(dz))


# --- effective squeezing (projector method) -------------------------------------------


def _finite_energy(op, delta, n):
    """E_Δ op E_Δ⁻¹ with E_Δ = e^{-Δ² n}, applied elementwise."""
    k = np.arange(n, dtype=float)
    return op * np.exp(-(delta**2) * (k[:, None] - k[None, :]))


def codespace_projector(delta: float, spec: GkpSpec, dim: int = 150) -> np.ndarray:
    """Projector onto the finite-energy code space at envelope Δ.

    |0_Δ⟩ is the common +1 eigenvector of S_{X,Δ}, S_{Z,Δ} and Z_Δ, i.e. the
    ground state of the positive operator Σ_O (O - I)†(O - I) (taken as the
    least right-singular vector of the stacked O - I).  The Hermitian part of
    -S_{X,Δ} - S_{Z,Δ} - Z_Δ is unbounded below because E_Δ⁻¹ grows with n,
    so it is not used directly.  The partner state is X_Δ|0_Δ⟩.
    """
    d = fock.displacement_stack(np.array([2 * spec.alpha, 2 * spec.beta, spec.beta, spec.alpha]), dim)
    s_x, s_z, z, x = (_finite_energy(m, delta, dim) for m in d)
    eye = np.eye(dim)
    stacked = np.vstack([s_x - eye, s_z - eye, z - eye])
    zero = np.linalg.svd(stacked, full_matrices=False)[2][-1].conj()
    one = x @ zero
    one = one - np.vdot(zero, one) * zero
    one /= np.linalg.norm(one)
    return np.outer(zero, zero.conj()) + np.outer(one, one.conj())


@dataclass
class EffectiveSqueezing:
    delta: float
    squeezing_db: float
    overlap: float
    scan: list = field(default_factory=list)


def effective_squeezing(rho, spec: GkpSpec | None = None, dim: int = 150, lo: float = 0.1, hi: float = 0.6, n_scan: int = 26) -> EffectiveSqueezing:
    """Δ* maximising Tr(P_Δ ρ): coarse scan over [lo, hi], then golden-section refinement."""
    spec = spec or GkpSpec(Lattice.SQUARE, 0, 0.3)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = fock.ket_to_dm(rho)
    rho = fock.pad_state(rho, dim) if rho.shape[0] < dim else rho[:dim, :dim]

    def overlap(d):
        return float(np.real(np.trace(codespace_projector(d, spec, dim) @ rho)))

    grid = np.linspace(lo, hi, n_scan)
    vals = [overlap(d) for d in grid]
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)]
    res = minimize_scalar(lambda d: -overlap(d), bracket=None, bounds=(a, b), method="bounded", options={"xatol": 1e-4})
    d_star = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    return EffectiveSqueezing(d_star, db_from_delta(d_star), max(-res.fun, vals[i]), list(zip(grid.tolist(), vals)))


# --- logical fidelity --------------------------------------------------------------------


def _f_hex(m, n):
    return (-1) ** m * np.cos(np.pi / 3 * (m + n - 1)) / ((m + n + 0.5) * (m - 2 * n + 0.5))


def decoder_points(spec: GkpSpec, truncation: int = 3):
    """Lattice points and weights of the Pauli measurement sums, keyed by 'X', 'Y', 'Z'.

    Sums run over integers in [-truncation, truncation).
    """
    rng = range(-truncation, truncation)
    out = {}
    if spec.lattice is Lattice.SQUARE:
        s = math.sqrt(2 * math.pi)
        out["X"] = [(s * (n + 0.5), (-1) ** n / (n + 0.5) / math.pi) for n in rng]
        out["Z"] = [(1j * s * (n + 0.5), (-1) ** n / (n + 0.5) / math.pi) for n in rng]
        out["Y"] = [
            (s * (m + 0.5) + 1j * s * (n + 0.5), 1 / ((m + 0.5) * (n + 0.5)) / math.pi**2)
            for m in rng
            for n in rng
        ]
    else:
        a = math.sqrt(math.pi / math.sqrt(3))  # |α_h|
        r3 = math.sqrt(3)
        c = 3 / math.pi**2
        out["X"] = [((m + 0.5) * r3 * a + 1j * (m + 2 * n + 0.5) * a, c * _f_hex(m, n)) for m in rng for n in rng]
        out["Y"] = [((m + 0.5) * r3 * a + 1j * (m + 2 * n + 1.5) * a, c * _f_hex(n, n - m)) for m in rng for n in rng]
        out["Z"] = [(m * r3 * a + 1j * (m + 2 * n + 1) * a, c * _f_hex(n, m)) for m in rng for n in rng]
    return out


def unique_quadrant_count(points) -> int:
    """Number of distinct points once ±β and ±β* are identified."""
    keys = {(round(abs(b.real), 9), round(abs(b.imag), 9)) for b in points}
    return len(keys)


@dataclass
class LogicalFidelity:
    fidelity: float  # clipped to [0, 1]
    fidelity_raw: float
    bloch: dict
    unphysical: bool
    n_points: int
    n_unique: int


def logical_fidelity(source, spec: GkpSpec, truncation: int = 3) -> LogicalFidelity:
    """Decoded logical fidelity F̄ = (1 ± ⟨Z_m⟩)/2 for the target |μ⟩_L."""
    pts = decoder_points(spec, truncation)
    chi = _chi_lookup(source)
    bloch = {}
    all_pts = []
    for key, terms in pts.items():
        betas = np.array([b for b, _ in terms])
        w = np.array([c for _, c in terms])
        bloch[key] = float(np.real(np.sum(w * chi(betas))))
        all_pts.extend(betas.tolist())
    sign = 1.0 if spec.mu == 0 else -1.0
    raw = 0.5 * (1 + sign * bloch["Z"])
    length = math.sqrt(sum(v * v for v in bloch.values()))
    return LogicalFidelity(
        fidelity=float(min(max(raw, 0.0), 1.0)),
        fidelity_raw=float(raw),
        bloch=bloch,
        unphysical=bool(length > 1 + 1e-9 or not 0 <= raw <= 1),
        n_points=len(all_pts),
        n_unique=unique_quadrant_count(all_pts),
    )


# --- squeezed-state analysis ----------------------------------------------------------


def chi_squeezed(beta, r: float):
    beta = np.asarray(beta, dtype=complex)
    return np.exp(-np.abs(beta * np.cosh(r) + np.conj(beta) * np.sinh(r)) ** 2 / 2)


@dataclass
class SqueezeFit:
    r: float
    db: float
    axis_db: dict = field(default_factory=dict)
    residual: float = 0.0


def _axis_fit(b, y, amplitude):
    """Fit A·exp(-|β|² e^{2s}/2) along one axis; s > 0 means squeezed along it."""
    res = least_squares(lambda p: amplitude * np.exp(-np.abs(b) ** 2 * np.exp(2 * p[0]) / 2) - y, [0.0])
    if not res.success or not np.isfinite(res.x[0]):
        raise FitDivergence("axis fit failed")
    return float(res.x[0])


def fit_squeezed(grid: ChiGrid, amplitude: float = 1.0, axes: bool = True) -> SqueezeFit:
    """Least-squares r of A·χ_S(β) over the grid, with A held fixed."""
    b, y = grid.betas, grid.re_chi
    res = least_squares(lambda p: amplitude * chi_squeezed(b, p[0]) - y, [0.5], bounds=([-5.0], [5.0]))
    r = float(res.x[0])
    if not res.success or not np.isfinite(r) or abs(r) >= 5.0 - 1e-6:
        raise FitDivergence(f"squeeze fit did not converge (r = {r})")
    out = SqueezeFit(r, 20 * r / math.log(10), residual=float(np.sqrt(np.mean(res.fun**2))))
    if axes:
        for name, mask in (("re", np.abs(b.imag) < 1e-12), ("im", np.abs(b.real) < 1e-12)):
            if np.count_nonzero(mask) >= 3:
                s = _axis_fit(b[mask], y[mask], amplitude)
                out.axis_db[name] = 20 * s / math.log(10)
    return out


def density_squeezing(rho, theta: float = 0.0, extent: float = 3.0, n: int = 601) -> float:
    """Squeezing (dB below vacuum) from a Gaussian fit to the quadrature distribution at angle θ."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = fock.ket_to_dm(rho)
    if theta:
        ph = np.exp(-1j * theta * np.arange(rho.shape[0]))
        rho = ph[:, None] * rho * np.conj(ph)[None, :]
    x = np.linspace(-extent, extent, n)
    px, _ = marginals(rho, x)

    def gauss(x, a, m, s):
        return a * np.exp(-((x - m) ** 2) / (2 * s * s))

    try:
        with warnings.catch_warnings():
            # an exact Gaussian leaves the covariance undefined; only popt is used
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(gauss, x, px, p0=[px.max(), 0.0, 0.3], maxfev=10000)
    except RuntimeError as exc:
        raise FitDivergence(str(exc)) from exc
    return float(-10 * math.log10(2 * popt[2] ** 2))


# --- Knill-Laflamme ------------------------------------------------------------------------


@dataclass
class KLReport:
    max_violation: float
    alpha: np.ndarray


def kl_check(codewords, errors) -> KLReport:
    """max |⟨W_σ|E_l†E_k|W_σ'⟩ - δ_σσ' α_lk| with α_lk the σ-averaged diagonal element."""
    w = [np.asarray(c, dtype=complex) for c in codewords]
    if abs(np.vdot(w[0], w[1])) > 1e-10:
        raise ValueError("code words must be orthogonal")
    ne = len(errors)
    alpha = np.zeros((ne, ne), dtype=complex)
    worst = 0.0
    for l, el in enumerate(errors):
        for k, ek in enumerate(errors):
            m = el.conj().T @ ek
            vals = np.array([[np.vdot(a, m @ b) for b in w] for a in w])
            alpha[l, k] = 0.5 * (vals[0, 0] + vals[1, 1])
            worst = max(worst, abs(vals[0, 1]), abs(vals[1, 0]), abs(vals[0, 0] - alpha[l, k]), abs(vals[1, 1] - alpha[l, k]))
    return KLReport(float(worst), alpha)


# --- report --------------------------------------------------------------------------------


def gkp_report(source, spec: GkpSpec, target=None, effective: bool = True) -> dict:
    """Table-style metrics for a GKP state given as ρ (or a χ grid for the decoder/stabilizer parts)."""
    out = {}
    st = stabilizer_squeezing(source, spec)
    out.update({k: float(v) for k, v in asdict(st).items()})
    lf = logical_fidelity(source, spec)
    out["logical_fidelity"] = lf.fidelity
    out["logical_fidelity_raw"] = lf.fidelity_raw
    out["bloch"] = lf.bloch
    out["bloch_unphysical"] = lf.unphysical
    if not isinstance(source, ChiGrid):
        rho = np.asarray(source, dtype=complex)
        if effective:
            out["effective_squeezing_db"] = effective_squeezing(rho, spec).squeezing_db
        if target is not None:
            t = np.asarray(target, dtype=complex)
            d = rho.shape[0]
            t = fock.pad_state(t, d) if t.size < d else t[:d]
            out["fidelity"] = fock.state_fidelity(rho, t)
    return out


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_metrics_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=1, sort_keys=True))


__all__ = ["MissingPoint", "GridMismatch", "FitDivergence"]
