"""Target states: squeezed vacuum, approximate GKP code words, binomial code words."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import comb

import numpy as np
from scipy.special import gammaln

from .fock import _as_space


class TruncationError(ValueError):
    """The requested state carries more weight beyond the cutoff than allowed."""


class DimensionError(ValueError):
    pass


class Lattice(str, Enum):
    SQUARE = "square"
    HEXAGONAL = "hexagonal"


@dataclass(frozen=True)
class SqueezeSpec:
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("squeezing parameter must be non-negative")

    @property
    def db(self) -> float:
        return 20 * self.r / np.log(10)


@dataclass(frozen=True)
class GkpSpec:
    lattice: Lattice = Lattice.SQUARE
    mu: int = 0
    delta: float = 0.301

    def __post_init__(self):
        object.__setattr__(self, "lattice", Lattice(self.lattice))
        if self.mu not in (0, 1):
            raise ValueError("logical index mu must be 0 or 1")
        if not 0 < self.delta <= 1:
            raise ValueError("envelope delta must lie in (0, 1]")

    @property
    def alpha(self) -> complex:
        if self.lattice is Lattice.SQUARE:
            return complex(np.sqrt(np.pi / 2))
        return np.exp(-1j * np.pi / 3) * self.beta

    @property
    def beta(self) -> complex:
        if self.lattice is Lattice.SQUARE:
            return 1j * np.sqrt(np.pi / 2)
        return 1j * np.sqrt(np.pi / np.sqrt(3))

    @property
    def squeezing_db(self) -> float:
        return -10 * np.log10(self.delta**2)

    @property
    def r(self) -> float:
        return float(np.log(1 / self.delta))


@dataclass(frozen=True)
class BinomialSpec:
    spacing: int = 1
    order: int = 1
    logical: str = "+Z"

    def __post_init__(self):
        if self.spacing < 0 or self.order < 1:
            raise ValueError("binomial code needs spacing >= 0 and order >= 1")
        if self.logical not in ("+Z", "-Z"):
            raise ValueError("logical must be '+Z' or '-Z'")

    @property
    def max_fock(self) -> int:
        return (self.order + 1) * (self.spacing + 1)


def db_from_delta(delta: float) -> float:
    return float(-10 * np.log10(delta**2))


def delta_from_db(db: float) -> float:
    return float(10 ** (-db / 20))


def squeezed_amplitudes(r: float, dim: int) -> np.ndarray:
    """Fock amplitudes of S(r)|0⟩ (unnormalised after truncation)."""
    psi = np.zeros(dim, dtype=complex)
    if r == 0:
        psi[0] = 1.0
        return psi
    n = np.arange((dim + 1) // 2)
    t = np.tanh(r)
    log_mag = n * np.log(t) + 0.5 * gammaln(2 * n + 1) - n * np.log(2) - gammaln(n + 1)
    psi[2 * n] = (-1.0) ** n * np.exp(log_mag) / np.sqrt(np.cosh(r))
    return psi


def squeezed_vacuum(spec: SqueezeSpec | float, space, tail_tol: float = 1e-4) -> np.ndarray:
    r = spec.r if isinstance(spec, SqueezeSpec) else float(spec)
    sp = _as_space(space)
    psi = squeezed_amplitudes(r, sp.dim)
    tail = 1.0 - float(np.sum(np.abs(psi) ** 2))
    if tail > tail_tol:
        raise TruncationError(f"squeezed vacuum r={r} loses {tail:.2e} beyond N={sp.dim}")
    return psi / np.linalg.norm(psi)


def _gkp_terms(spec: GkpSpec, cutoff: float = 1e-14):
    """Lattice points and complex weights of the approximate code word sum."""
    a, b, d2, mu = spec.alpha, spec.beta, spec.delta**2, spec.mu
    # envelope weight exp(-Δ²|λ|²) > cutoff  <=>  |λ| < lam_max
    lam_max = np.sqrt(np.log(1 / cutoff) / d2)
    pts, wts = [], []
    if spec.lattice is Lattice.SQUARE:
        kmax = int(np.ceil(lam_max / (2 * abs(a)))) + 1
        for k in range(-kmax, kmax + 1):
            lam = (2 * k + mu) * a
            w = np.exp(-d2 * abs(lam) ** 2)
            if w > cutoff:
                pts.append(lam)
                wts.append(w)
    else:
        # |(2k+μ)α + lβ| grows at least like the lattice's shortest vector
        kmax = int(np.ceil(lam_max / abs(a))) + 2
        for k in range(-kmax, kmax + 1):
            for l in range(-kmax, kmax + 1):
                lam = (2 * k + mu) * a + l * b
                w = np.exp(-d2 * abs(lam) ** 2)
                if w > cutoff:
                    pts.append(lam)
                    wts.append(w * np.exp(-1j * np.pi * (k * l + mu * l / 2)))
    return np.array(pts, dtype=complex), np.array(wts, dtype=complex)


def _gkp_exact_norm2(spec: GkpSpec, pts, wts, r: float) -> float:
    """Untruncated ⟨ψ|ψ⟩ of the lattice sum, from the Gaussian overlaps of its peaks."""
    lam_i = pts[:, None]
    lam_j = pts[None, :]
    g = lam_j - lam_i
    phase = np.exp((np.conj(lam_i) * lam_j - lam_i * np.conj(lam_j)) / 2)
    chi = np.exp(-np.abs(g * np.cosh(r) + np.conj(g) * np.sinh(r)) ** 2 / 2)
    return float(np.real(np.sum(np.conj(wts)[:, None] * wts[None, :] * phase * chi)))


def hermite_functions(dim: int, x: np.ndarray) -> np.ndarray:
    """⟨x|n⟩ for n < dim on the grid ``x``, shape (dim, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((dim, x.size))
    out[0] = np.pi**-0.25 * np.exp(-(x**2) / 2)
    if dim > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, dim - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def _gkp_unnormalised(spec: GkpSpec, dim: int, cutoff: float, dx: float):
    """Project the lattice sum onto the first ``dim`` Fock states.

    Each peak D(λ)S(r)|0⟩ is written in position space,
    e^{-i x0 p0/2} e^{i p0 x} ψ_r(x - x0) with (x0, p0) = √2 (Re λ, Im λ),
    and integrated against Hermite functions.  This stays stable for large
    |λ| where Fock-space recursions for displaced squeezed states are not.
    """
    pts, wts = _gkp_terms(spec, cutoff)
    r = spec.r if spec.lattice is Lattice.SQUARE else 0.0
    half = np.sqrt(2 * dim + 1) + 12.0
    x = np.arange(-half, half + dx / 2, dx)
    wave = np.zeros(x.size, dtype=complex)
    width = np.exp(2 * r)
    for lam, w in zip(pts, wts):
        x0, p0 = np.sqrt(2) * lam.real, np.sqrt(2) * lam.imag
        if abs(x0) > half + 10 / np.sqrt(width):
            continue  # peak has no overlap with the retained Fock levels
        wave += (
            w
            * np.exp(-0.5j * x0 * p0 + 1j * p0 * x)
            * np.exp(-width * (x - x0) ** 2 / 2)
        )
    wave *= np.pi**-0.25 * np.exp(r / 2)
    psi = hermite_functions(dim, x) @ wave * dx
    return psi, _gkp_exact_norm2(spec, pts, wts, r)


def gkp_state(
    spec: GkpSpec,
    space,
    tail_tol: float = 1e-6,
    cutoff: float = 1e-14,
    dx: float = 0.004,
) -> np.ndarray:
    """Approximate GKP code word on the square or hexagonal lattice.

    Square peaks are displaced squeezed vacua with r = ln(1/Δ); hexagonal
    peaks are displaced vacua, matching the two printed definitions.
    """
    sp = _as_space(space)
    psi, norm2 = _gkp_unnormalised(spec, sp.dim, cutoff, dx)
    tail = 1.0 - float(np.sum(np.abs(psi) ** 2)) / norm2
    if tail > tail_tol:
        raise TruncationError(
            f"GKP {spec.lattice.value} delta={spec.delta} loses {tail:.2e} beyond N={sp.dim}"
        )
    return psi / np.linalg.norm(psi)


def gkp_tail(spec: GkpSpec, dim: int, cutoff: float = 1e-14) -> float:
    """Fraction of the code word norm beyond ``dim`` levels."""
    psi, norm2 = _gkp_unnormalised(spec, dim, cutoff, 0.004)
    return 1.0 - float(np.sum(np.abs(psi) ** 2)) / norm2


def binomial_state(spec: BinomialSpec, space) -> np.ndarray:
    sp = _as_space(space)
    if spec.max_fock >= sp.dim:
        raise DimensionError(
            f"binomial code word reaches |{spec.max_fock}>, needs N > {spec.max_fock}"
        )
    psi = np.zeros(sp.dim, dtype=complex)
    want = 0 if spec.logical == "+Z" else 1
    for p in range(spec.order + 2):
        if p % 2 == want:
            psi[p * (spec.spacing + 1)] = np.sqrt(comb(spec.order + 1, p))
    return psi / np.sqrt(2.0**spec.order)


def target_state(spec, space, **kwargs) -> np.ndarray:
    if isinstance(spec, SqueezeSpec):
        return squeezed_vacuum(spec, space, **kwargs)
    if isinstance(spec, GkpSpec):
        return gkp_state(spec, space, **kwargs)
    if isinstance(spec, BinomialSpec):
        return binomial_state(spec, space)
    raise TypeError(f"unknown target spec {spec!r}")


def truncation_tail(spec, dim: int) -> float:
    """Norm² of the ideal target that lies beyond ``dim`` levels."""
    if isinstance(spec, SqueezeSpec):
        return 1.0 - float(np.sum(np.abs(squeezed_amplitudes(spec.r, dim)) ** 2))
    if isinstance(spec, GkpSpec):
        return gkp_tail(spec, dim)
    return 0.0 if spec.max_fock < dim else 1.0


# the seven states prepared in the experiment, keyed by a short name
TABLE_STATES = {
    "squeezed": SqueezeSpec(1.55),
    "gkp_s_0.247": GkpSpec(Lattice.SQUARE, 0, 0.247),
    "gkp_s_0.301": GkpSpec(Lattice.SQUARE, 0, 0.301),
    "gkp_h_0.301": GkpSpec(Lattice.HEXAGONAL, 0, 0.301),
    "bin_s1_+z": BinomialSpec(1, 1, "+Z"),
    "bin_s2_+z": BinomialSpec(2, 2, "+Z"),
    "bin_s2_-z": BinomialSpec(2, 2, "-Z"),
}

# pulse durations of the experimental table (microseconds)
TABLE_DURATIONS_US = {
    "squeezed": 1057,
    "gkp_s_0.247": 1301,
    "gkp_s_0.301": 933,
    "gkp_h_0.301": 978,
    "bin_s1_+z": 514,
    "bin_s2_+z": 688,
    "bin_s2_-z": 780,
}

# measured infidelities (1 - F, state fidelity column)
TABLE_INFIDELITIES = {
    "squeezed": 1 - 0.753,
    "gkp_s_0.247": 1 - 0.60,
    "gkp_s_0.301": 1 - 0.83,
    "gkp_h_0.301": 1 - 0.77,
    "bin_s1_+z": 1 - 0.889,
    "bin_s2_+z": 1 - 0.843,
    "bin_s2_-z": 1 - 0.77,
}
