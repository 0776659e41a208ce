"""Truncated Fock-space and qubit-oscillator linear algebra.

Hybrid vectors are ordered qubit-major: index ``q * N + n`` with ``q = 0``
for |↓⟩ and ``q = 1`` for |↑⟩.  The qubit convention is fixed here for the
whole package: σ_z|↓⟩ = -|↓⟩ and σ⁺ = |↑⟩⟨↓|.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln


class TruncationWarning(UserWarning):
    """An operator or state is being built close to the Fock cutoff."""


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FockSpace:
    dim: int

    def __post_init__(self):
        if int(self.dim) < 2:
            raise ValueError(f"Fock dimension must be >= 2, got {self.dim}")

    @property
    def hybrid_dim(self) -> int:
        return 2 * self.dim


def _as_space(space) -> FockSpace:
    return space if isinstance(space, FockSpace) else FockSpace(int(space))


@lru_cache(maxsize=64)
def _annihilation(n: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)
    a.flags.writeable = False
    return a


def annihilation(space) -> np.ndarray:
    """Lowering operator â with ⟨n-1|â|n⟩ = √n."""
    return _annihilation(_as_space(space).dim).copy()


def creation(space) -> np.ndarray:
    return annihilation(space).conj().T


def number(space) -> np.ndarray:
    n = _as_space(space).dim
    return np.diag(np.arange(n, dtype=float)).astype(complex)


def identity(space) -> np.ndarray:
    return np.eye(_as_space(space).dim, dtype=complex)


def position(space) -> np.ndarray:
    a = annihilation(space)
    return (a + a.conj().T) / np.sqrt(2)


def momentum(space) -> np.ndarray:
    a = annihilation(space)
    return -1j * (a - a.conj().T) / np.sqrt(2)


def parity(space) -> np.ndarray:
    """e^{iπ â†â} as a diagonal ±1 matrix."""
    n = _as_space(space).dim
    return np.diag((-1.0) ** np.arange(n)).astype(complex)


# qubit operators in the (|↓⟩, |↑⟩) basis
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
SIGMA_X = SIGMA_PLUS + SIGMA_MINUS
SIGMA_Y = -1j * (SIGMA_PLUS - SIGMA_MINUS)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
QUBIT_I = np.eye(2, dtype=complex)
DOWN = np.array([1, 0], dtype=complex)
UP = np.array([0, 1], dtype=complex)


def expm_antihermitian(generator: np.ndarray) -> np.ndarray:
    """exp(G) for anti-Hermitian G via the eigendecomposition of iG."""
    h = 1j * generator
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ v.conj().T


def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(-i h t) for Hermitian h."""
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def displacement(beta: complex, space) -> np.ndarray:
    """D(β) = exp(β↠- β*â) on the truncated space (exactly unitary).

    Elements near the cutoff deviate from the infinite-dimensional operator;
    use :func:`displacement_elements` when exact matrix elements are needed.
    """
    sp = _as_space(space)
    beta = complex(beta)
    if abs(beta) ** 2 > sp.dim / 4:
        warnings.warn(
            f"|beta|^2 = {abs(beta) ** 2:.3g} exceeds N/4 for N = {sp.dim}",
            TruncationWarning,
            stacklevel=2,
        )
    if beta == 0:
        return identity(sp)
    a = _annihilation(sp.dim)
    gen = beta * a.conj().T - np.conj(beta) * a
    return expm_antihermitian(gen)


def _laguerre_functions(x: np.ndarray, dim: int) -> np.ndarray:
    """g[..., k, n] = √(n!/(n+k)!) x^{k/2} e^{-x/2} L_n^{(k)}(x) for n + k < dim.

    Uses the three-term Laguerre recurrence rewritten for the normalised
    functions, which keeps every intermediate O(1) even for x ≫ dim.
    """
    x = np.asarray(x, dtype=float)[..., None]
    k = np.arange(dim, dtype=float)
    with np.errstate(divide="ignore"):
        logx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
    with np.errstate(invalid="ignore"):
        log_g0 = 0.5 * k * logx - 0.5 * x - 0.5 * gammaln(k + 1)
        g0 = np.exp(log_g0)
    g0 = np.where((k == 0) & (x == 0), 1.0, g0)
    out = np.zeros(x.shape[:-1] + (dim, dim))
    out[..., :, 0] = g0
    if dim > 1:
        g1 = g0 * (1 + k - x) / np.sqrt(k + 1)
        out[..., :, 1] = g1
        gm, gc = g0, g1
        for n in range(1, dim - 1):
            gn = ((2 * n + 1 + k - x) * gc - np.sqrt(n * (n + k)) * gm) / np.sqrt(
                (n + 1) * (n + 1 + k)
            )
            out[..., :, n + 1] = gn
            gm, gc = gc, gn
    return out


def displacement_stack(betas, dim: int) -> np.ndarray:
    """Exact ⟨m|D(β)|n⟩ for 0 <= m, n < dim at many points, shape (K, dim, dim).

    These are the matrix elements of the untruncated operator, so the block
    is not unitary, but Tr(ρ D) is exact for any ρ supported inside it.
    """
    betas = np.asarray(betas, dtype=complex).ravel()
    x = np.abs(betas) ** 2
    theta = np.angle(betas)
    g = _laguerre_functions(x, dim)  # (K, k, n)
    m_idx, n_idx = np.indices((dim, dim))
    k = m_idx - n_idx
    lower = k >= 0
    kk = np.abs(k)
    low = np.minimum(m_idx, n_idx)
    vals = g[:, kk, low]
    phase = np.exp(1j * theta[:, None, None] * k[None])
    sign = np.where(lower, 1.0, (-1.0) ** kk)
    return vals * phase * sign[None]


def displacement_elements(beta: complex, dim: int) -> np.ndarray:
    """Exact ⟨m|D(β)|n⟩ block (see :func:`displacement_stack`)."""
    return displacement_stack([beta], dim)[0]


def squeeze(r: float, space) -> np.ndarray:
    """S(r) = exp[(r* â² - r â†²)/2] with real r."""
    sp = _as_space(space)
    r = float(r)
    if np.exp(2 * abs(r)) > sp.dim / 6:
        warnings.warn(
            f"e^(2r) = {np.exp(2 * abs(r)):.3g} exceeds N/6 for N = {sp.dim}",
            TruncationWarning,
            stacklevel=2,
        )
    if r == 0:
        return identity(sp)
    a = _annihilation(sp.dim)
    gen = 0.5 * (r * (a @ a) - r * (a.conj().T @ a.conj().T))
    return expm_antihermitian(gen)


def fock_state(n: int, space) -> np.ndarray:
    sp = _as_space(space)
    if not 0 <= n < sp.dim:
        raise DimensionMismatch(f"|{n}> outside Fock space of dimension {sp.dim}")
    v = np.zeros(sp.dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_state(alpha: complex, space) -> np.ndarray:
    """|α⟩ from its exact Fock amplitudes, renormalised after truncation."""
    sp = _as_space(space)
    v = displacement_elements(alpha, sp.dim)[:, 0]
    return v / np.linalg.norm(v)


def embed_hybrid(spin_op: np.ndarray, osc_op: np.ndarray) -> np.ndarray:
    """spin ⊗ oscillator with the qubit as the slow index."""
    spin_op = np.asarray(spin_op)
    osc_op = np.asarray(osc_op)
    if spin_op.shape != (2, 2) or osc_op.ndim != 2 or osc_op.shape[0] != osc_op.shape[1]:
        raise DimensionMismatch(
            f"expected a 2x2 qubit operator and a square oscillator operator, "
            f"got {spin_op.shape} and {osc_op.shape}"
        )
    return np.kron(spin_op, osc_op)


def hybrid_state(qubit: np.ndarray, osc: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(qubit, dtype=complex), np.asarray(osc, dtype=complex))


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def expectation(op: np.ndarray, state: np.ndarray) -> complex:
    """⟨op⟩ for a ket (1-D) or density matrix (2-D)."""
    op = np.asarray(op)
    state = np.asarray(state)
    if op.shape[0] != state.shape[0]:
        raise DimensionMismatch(f"operator {op.shape} vs state {state.shape}")
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    return complex(np.trace(op @ state))


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """⟨ψ|ρ|ψ⟩ for a density matrix (or ket) ρ and a pure target ψ."""
    rho = np.asarray(rho)
    psi = np.asarray(psi, dtype=complex)
    if rho.shape[0] != psi.shape[0]:
        raise DimensionMismatch(f"state of dim {rho.shape[0]} vs target of dim {psi.shape[0]}")
    if rho.ndim == 1:
        f = abs(np.vdot(psi, rho)) ** 2
    else:
        f = float(np.real(np.vdot(psi, rho @ psi)))
    if f < 0:
        if f < -1e-9:
            warnings.warn(f"negative fidelity {f:.3g} clipped to 0", RuntimeWarning, stacklevel=2)
        f = 0.0
    return float(min(f, 1.0))


def partial_trace_qubit(rho: np.ndarray) -> np.ndarray:
    """Reduced oscillator state of a hybrid density matrix or ket."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = ket_to_dm(rho)
    n = rho.shape[0] // 2
    return rho[:n, :n] + rho[n:, n:]


def pad_state(state: np.ndarray, dim: int) -> np.ndarray:
    """Zero-pad an oscillator ket or density matrix to a larger truncation."""
    state = np.asarray(state)
    n = state.shape[0]
    if dim < n:
        raise DimensionMismatch(f"cannot pad dimension {n} down to {dim}")
    if state.ndim == 1:
        out = np.zeros(dim, dtype=complex)
        out[:n] = state
    else:
        out = np.zeros((dim, dim), dtype=complex)
        out[:n, :n] = state
    return out


def truncate_state(psi: np.ndarray, dim: int) -> tuple[np.ndarray, float]:
    """Cut a ket to ``dim`` levels; returns the renormalised ket and the discarded norm²."""
    psi = np.asarray(psi, dtype=complex)
    tail = float(np.sum(np.abs(psi[dim:]) ** 2))
    cut = psi[:dim].copy()
    return cut / np.linalg.norm(cut), tail
