"""Control Hamiltonian and propagation of qubit-oscillator states.

With constant Rabi rates every segment Hamiltonian is a diagonal phase
rotation of one fixed operator,

    H(φ_r, φ_b) = R H(0, 0) R†,   R = diag(exp(i(φ_s q - φ_m n))),

with φ_s = (φ_r + φ_b)/2, φ_m = (φ_r - φ_b)/2, q the qubit label (↓ = 0,
↑ = 1) and n the phonon number.  A detuning δ â†â commutes with R, so a
whole waveform needs a single eigendecomposition of H(0, 0) + δ â†â.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import fock
from .fock import _as_space
from .waveform import TWO_PI, Waveform


class IntegratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Motional noise: dephasing rate Γ (1/s), static detuning δ (rad/s), thermal n̄."""

    gamma: float = 0.0
    delta: float = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if self.gamma < 0 or self.nbar < 0:
            raise ValueError("gamma and nbar must be non-negative")


# error-budget values for the experiment
EXPERIMENT_NOISE = NoiseModel(gamma=18.0, delta=TWO_PI * 18.0, nbar=0.05)


@dataclass(frozen=True)
class LambDickeParams:
    eta: float = 0.083
    omega_r_mode: float = TWO_PI * 1.33e6
    taylor_order: int = 4
    delta_omega_l: float | None = None  # tone detuning magnitude; defaults to omega_r_mode

    def __post_init__(self):
        if not 1 <= self.taylor_order <= 6:
            raise ValueError("taylor_order must lie in 1..6")

    @property
    def tone_detuning(self) -> float:
        return self.omega_r_mode if self.delta_omega_l is None else self.delta_omega_l


def _hybrid_labels(n: int):
    q = np.repeat([0, 1], n)
    ph = np.tile(np.arange(n), 2)
    return q, ph


def control_hamiltonian(phi_r, phi_b, omega_r, omega_b, space, delta: float = 0.0) -> np.ndarray:
    """(Ω_r/2)σ⁺â e^{iφ_r} + (Ω_b/2)σ⁺↠e^{iφ_b} + h.c. (+ δ â†â), angular units."""
    sp = _as_space(space)
    a = fock.annihilation(sp)
    block = 0.5 * omega_r * np.exp(1j * phi_r) * a + 0.5 * omega_b * np.exp(1j * phi_b) * a.conj().T
    h = fock.embed_hybrid(fock.SIGMA_PLUS, block)
    h = h + h.conj().T
    if delta:
        h = h + delta * fock.embed_hybrid(fock.QUBIT_I, fock.number(sp))
    return h


def segment_hamiltonian(seg, wf: Waveform, space, delta: float = 0.0) -> np.ndarray:
    return control_hamiltonian(seg.phi_r, seg.phi_b, wf.omega_r, wf.omega_b, space, delta)


def joint_parity(space) -> np.ndarray:
    sp = _as_space(space)
    return fock.embed_hybrid(fock.SIGMA_Z, fock.parity(sp))


def _phase_diag(phi_r, phi_b, n: int) -> np.ndarray:
    """Rows of R = diag(exp(i(φ_s q - φ_m n))) for each segment, shape (S, 2n)."""
    q, ph = _hybrid_labels(n)
    phi_r = np.atleast_1d(phi_r)
    phi_b = np.atleast_1d(phi_b)
    s = 0.5 * (phi_r + phi_b)
    m = 0.5 * (phi_r - phi_b)
    return np.exp(1j * (s[:, None] * q[None, :] - m[:, None] * ph[None, :]))


class PhaseFrame:
    """Eigendecomposition of H(0, 0) + δ â†â shared by every segment."""

    def __init__(self, dim: int, omega_r: float, omega_b: float, delta: float = 0.0):
        self.dim = dim
        h0 = control_hamiltonian(0.0, 0.0, omega_r, omega_b, dim, delta)
        self.evals, self.evecs = np.linalg.eigh(h0)
        self.evecs_h = self.evecs.conj().T

    def step(self, psi, diag, dt):
        """Apply R exp(-i H0 dt) R† to a ket (or a stack of kets along axis 0)."""
        x = self.evecs_h @ (np.conj(diag) * psi)
        x = np.exp(-1j * self.evals * dt) * x
        return diag * (self.evecs @ x)

    def segment_unitary(self, diag, dt):
        u0 = (self.evecs * np.exp(-1j * self.evals * dt)) @ self.evecs_h
        return diag[:, None] * u0 * np.conj(diag)[None, :]


def _hybrid_dim(state) -> int:
    n2 = np.asarray(state).shape[0]
    if n2 % 2:
        raise fock.DimensionMismatch(f"hybrid state must have even dimension, got {n2}")
    return n2 // 2


def waveform_unitary(wf: Waveform, space, delta: float = 0.0) -> np.ndarray:
    sp = _as_space(space)
    u = np.eye(sp.hybrid_dim, dtype=complex)
    if wf.n_segments == 0:
        return u
    frame = PhaseFrame(sp.dim, wf.omega_r, wf.omega_b, delta)
    diags = _phase_diag(wf.phi_r, wf.phi_b, sp.dim)
    for d, dt in zip(diags, wf.dt):
        u = frame.segment_unitary(d, dt) @ u
    return u


def propagate_unitary(wf: Waveform, psi0, delta: float = 0.0) -> np.ndarray:
    """Time-ordered product of segment propagators applied to a ket or density matrix."""
    psi0 = np.asarray(psi0, dtype=complex)
    n = _hybrid_dim(psi0)
    if wf.n_segments == 0:
        return psi0.copy()
    if psi0.ndim == 2:
        u = waveform_unitary(wf, n, delta)
        return u @ psi0 @ u.conj().T
    frame = PhaseFrame(n, wf.omega_r, wf.omega_b, delta)
    diags = _phase_diag(wf.phi_r, wf.phi_b, n)
    psi = psi0
    for d, dt in zip(diags, wf.dt):
        psi = frame.step(psi, d, dt)
    return psi


def propagate_detuned(wf: Waveform, delta: float, psi0) -> np.ndarray:
    """Evolution under H(t) + δ â†â."""
    return propagate_unitary(wf, psi0, delta=delta)


def thermal_state(nbar: float, space) -> np.ndarray:
    """Truncated Bose-Einstein populations, renormalised."""
    sp = _as_space(space)
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    p = np.zeros(sp.dim)
    if nbar == 0:
        p[0] = 1.0
    else:
        n = np.arange(sp.dim)
        p = (nbar / (1 + nbar)) ** n / (1 + nbar)
        p /= p.sum()
    return np.diag(p).astype(complex)


def ground_hybrid(space, qubit: str = "down", nbar: float = 0.0):
    """|q⟩⊗|0⟩ as a ket, or |q⟩⟨q|⊗ρ_th when n̄ > 0."""
    sp = _as_space(space)
    qv = fock.DOWN if qubit == "down" else fock.UP
    if nbar == 0:
        return fock.hybrid_state(qv, fock.fock_state(0, sp))
    return np.kron(np.outer(qv, qv.conj()), thermal_state(nbar, sp))


def _sector_masks(n: int):
    q, ph = _hybrid_labels(n)
    label = (q + ph) % 2
    return [np.flatnonzero(label == 0), np.flatnonzero(label == 1)]


def propagate_master(
    wf: Waveform,
    noise: NoiseModel,
    rho0,
    rtol: float = 1e-9,
    atol: float = 1e-11,
    include_detuning: bool = True,
) -> np.ndarray:
    """Lindblad evolution with collapse operator √Γ â†â and optional δ â†â.

    The generator conserves joint parity, so each parity block of ρ is
    integrated on its own (blocks that start at zero stay at zero).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = fock.ket_to_dm(rho0)
    n = _hybrid_dim(rho0)
    if wf.n_segments == 0:
        return rho0.copy()
    delta = noise.delta if include_detuning else 0.0
    gamma = noise.gamma
    _, ph = _hybrid_labels(n)
    ph = ph.astype(float)
    sectors = _sector_masks(n)
    h0 = control_hamiltonian(0.0, 0.0, wf.omega_r, wf.omega_b, n, delta)
    diags = _phase_diag(wf.phi_r, wf.phi_b, n)

    blocks = {}
    for i, A in enumerate(sectors):
        for j, B in enumerate(sectors):
            blk = rho0[np.ix_(A, B)]
            if np.any(np.abs(blk) > 0):
                blocks[(i, j)] = blk.copy()

    for d, dt in zip(diags, wf.dt):
        h = d[:, None] * h0 * np.conj(d)[None, :]
        for (i, j), blk in blocks.items():
            A, B = sectors[i], sectors[j]
            hA = h[np.ix_(A, A)]
            hB = h[np.ix_(B, B)]
            nA, nB = ph[A], ph[B]
            deph = gamma * (np.outer(nA, nB) - 0.5 * (nA[:, None] ** 2 + nB[None, :] ** 2))
            shape = blk.shape

            def rhs(_t, y, hA=hA, hB=hB, deph=deph, shape=shape):
                r = y.reshape(shape)
                return (-1j * (hA @ r - r @ hB) + deph * r).ravel()

            sol = solve_ivp(rhs, (0.0, float(dt)), blk.ravel(), method="DOP853", rtol=rtol, atol=atol)
            if not sol.success:
                raise IntegratorError(sol.message)
            blocks[(i, j)] = sol.y[:, -1].reshape(shape)

    rho = np.zeros_like(rho0)
    for (i, j), blk in blocks.items():
        rho[np.ix_(sectors[i], sectors[j])] = blk
    return 0.5 * (rho + rho.conj().T)


# --- beyond Lamb-Dicke -----------------------------------------------------------


def _lamb_dicke_pieces(params: LambDickeParams, dim: int) -> dict[int, np.ndarray]:
    """F_q with exp(iη X(t)) ≈ Σ_q e^{i q ω t} F_q, X(t) = â e^{-iωt} + ↠e^{iωt}."""
    a = fock.annihilation(dim)
    ad = a.conj().T
    terms = {0: np.eye(dim, dtype=complex)}  # C_{j,q} for the current power j
    pieces = {0: np.eye(dim, dtype=complex)}
    eta = params.eta
    for j in range(1, params.taylor_order + 1):
        nxt = {}
        for q, c in terms.items():
            nxt[q - 1] = nxt.get(q - 1, 0) + c @ a
            nxt[q + 1] = nxt.get(q + 1, 0) + c @ ad
        terms = nxt
        coeff = (1j * eta) ** j / math.factorial(j)
        for q, c in terms.items():
            pieces[q] = pieces.get(q, 0) + coeff * c
    return pieces


def _ld_tone_coeffs(phi_r, phi_b, omega_r, omega_b, params: LambDickeParams):
    """Carrier-scale amplitudes of the two tones; the -π/2 absorbs the i of the first-order term."""
    om_r = omega_r / params.eta
    om_b = omega_b / params.eta
    c_red = 0.5 * om_r * np.exp(1j * (phi_r - np.pi / 2))
    c_blue = 0.5 * om_b * np.exp(1j * (phi_b - np.pi / 2))
    return c_red, c_blue


def lamb_dicke_hamiltonian(
    t: float,
    phi_r: float,
    phi_b: float,
    params: LambDickeParams,
    space,
    omega_r: float = TWO_PI * 2000,
    omega_b: float = TWO_PI * 2000,
    rwa: bool = False,
) -> np.ndarray:
    """Two-tone spin-motion Hamiltonian with the Lamb-Dicke exponential expanded to ``taylor_order``.

    The red tone sits at Δω_L = -ω and the blue tone at +ω; tone amplitudes are
    Ω_{r,b}/η so the first-order resonant terms reproduce the sideband Rabi
    rates.  ``rwa=True`` keeps only the non-rotating terms.
    """
    sp = _as_space(space)
    pieces = _lamb_dicke_pieces(params, sp.dim)
    c_red, c_blue = _ld_tone_coeffs(phi_r, phi_b, omega_r, omega_b, params)
    w = params.omega_r_mode
    dl = params.tone_detuning
    block = np.zeros((sp.dim, sp.dim), dtype=complex)
    for q, f in pieces.items():
        fr = q * w + dl  # red tone: e^{-iΔω_L t} with Δω_L = -dl
        fb = q * w - dl
        if rwa:
            cr = c_red if abs(fr) < 0.5 * w else 0.0
            cb = c_blue if abs(fb) < 0.5 * w else 0.0
        else:
            cr = c_red * np.exp(1j * fr * t)
            cb = c_blue * np.exp(1j * fb * t)
        block = block + (cr + cb) * f
    h = fock.embed_hybrid(fock.SIGMA_PLUS, block)
    return h + h.conj().T


def propagate_lamb_dicke(
    wf: Waveform,
    params: LambDickeParams,
    psi0,
    steps_per_period: int = 20,
) -> np.ndarray:
    """Integrate the full (non-RWA) expanded Hamiltonian with fixed-step RK4.

    The step never exceeds (2π/ω)/steps_per_period so the fastest rotating
    terms are resolved.
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    n = _hybrid_dim(psi)
    pieces = _lamb_dicke_pieces(params, n)
    qs = np.array(sorted(pieces))
    stack = np.stack([pieces[q] for q in qs])  # (Q, n, n)
    stack_h = stack.conj().transpose(0, 2, 1)
    w = params.omega_r_mode
    dl = params.tone_detuning
    h_max = TWO_PI / w / steps_per_period
    t0 = 0.0

    def deriv(t, y, c_red, c_blue):
        coef = c_red * np.exp(1j * (qs * w + dl) * t) + c_blue * np.exp(1j * (qs * w - dl) * t)
        down, up = y[:n], y[n:]
        new_up = coef @ (stack @ down)
        new_down = np.conj(coef) @ (stack_h @ up)
        return -1j * np.concatenate([new_down, new_up])

    for seg in wf.segments():
        c_red, c_blue = _ld_tone_coeffs(seg.phi_r, seg.phi_b, wf.omega_r, wf.omega_b, params)
        steps = max(1, int(np.ceil(seg.dt / h_max)))
        h = seg.dt / steps
        t = t0
        for _ in range(steps):
            k1 = deriv(t, psi, c_red, c_blue)
            k2 = deriv(t + h / 2, psi + h / 2 * k1, c_red, c_blue)
            k3 = deriv(t + h / 2, psi + h / 2 * k2, c_red, c_blue)
            k4 = deriv(t + h, psi + h * k3, c_red, c_blue)
            psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        t0 += seg.dt
    return psi


def hybrid_fidelity(state, target_osc, qubit: str = "down") -> float:
    """|⟨q, ψ_target|state⟩|² (or ⟨q,ψ|ρ|q,ψ⟩) with the target padded as needed."""
    state = np.asarray(state)
    n = _hybrid_dim(state)
    tgt = np.zeros(2 * n, dtype=complex)
    off = 0 if qubit == "down" else n
    t = np.asarray(target_osc, dtype=complex)
    m = min(n, t.size)
    tgt[off : off + m] = t[:m]
    return fock.state_fidelity(state, tgt)
