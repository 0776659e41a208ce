"""Gate-sequence baselines: GKP preparation from sequential state-dependent forces.

A gate e^{i θ σ ⊗ Q} with Q = x̂ or p̂ splits into the two eigenprojectors of
σ, each carrying an ordinary displacement: e^{iθx̂} = D(iθ/√2) and
e^{iθp̂} = D(-θ/√2).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import fock
from .targets import GkpSpec, gkp_state

ALPHA_GRID = 2 * np.sqrt(np.pi)


class MissingParams(ValueError):
    """A parameterised sequence was requested without its parameter lists."""


class SdfAxis(str, Enum):
    SX_X = "sx_x"
    SY_X = "sy_x"
    SX_P = "sx_p"
    SY_P = "sy_p"


_PAULI = {"x": fock.SIGMA_X, "y": fock.SIGMA_Y}


@dataclass(frozen=True)
class SdfGate:
    """exp(i · sign · magnitude · σ ⊗ Q) for the axis pair σ, Q."""

    axis: SdfAxis
    magnitude: float
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "axis", SdfAxis(self.axis))
        if self.magnitude < 0:
            raise ValueError("gate magnitude must be non-negative")
        if self.sign not in (1, -1):
            raise ValueError("gate sign must be +1 or -1")

    @property
    def theta(self) -> float:
        return self.sign * self.magnitude

    def unitary(self, space) -> np.ndarray:
        sp = fock._as_space(space)
        pauli = _PAULI[self.axis.value[1]]
        w, v = np.linalg.eigh(pauli)
        out = np.zeros((sp.hybrid_dim, sp.hybrid_dim), dtype=complex)
        for lam, vec in zip(w, v.T):
            theta = self.theta * lam
            beta = 1j * theta / np.sqrt(2) if self.axis.value[-1] == "x" else -theta / np.sqrt(2)
            out += np.kron(np.outer(vec, vec.conj()), fock.displacement(beta, sp))
        return out


@dataclass(frozen=True)
class DurationModel:
    eta: float = 0.1
    eta_omega: float = 2 * np.pi * 2000.0  # rad/s

    def __post_init__(self):
        if self.eta <= 0 or self.eta_omega <= 0:
            raise ValueError("duration model parameters must be positive")

    @property
    def omega(self) -> float:
        return self.eta_omega / self.eta

    def squeeze_time(self, r: float) -> float:
        return abs(r) / (self.eta**2 * self.omega)

    def sdf_time(self, gates) -> float:
        return 2 * sum(g.magnitude for g in gates) / self.eta_omega

    def total(self, gates, r: float) -> float:
        return self.squeeze_time(r) + self.sdf_time(gates)


@dataclass
class GateSequence:
    gates: list
    r: float
    label: str = ""
    meta: dict = field(default_factory=dict)

    def duration(self, model: DurationModel = DurationModel()) -> float:
        return model.total(self.gates, self.r)


def deneve_sequence(r: float = 0.0) -> GateSequence:
    """Four-gate sequence e^{-iα₄σ_y x} e^{iα₃σ_x p} e^{iα₂σ_y x} e^{-iα₁σ_x p}.

    Gates are listed in application order (α₁ first).
    """
    a1, a2, a3, a4 = np.array([1.0, 0.031, 0.5, 0.125]) * ALPHA_GRID
    gates = [
        SdfGate(SdfAxis.SX_P, a1, -1),
        SdfGate(SdfAxis.SY_X, a2, +1),
        SdfGate(SdfAxis.SX_P, a3, +1),
        SdfGate(SdfAxis.SY_X, a4, -1),
    ]
    return GateSequence(gates, r, "deneve")


def hastrup_sequence(u=None, w=None, v=None, r: float = 0.0) -> GateSequence:
    """Rounds e^{iu_kσ_x x} e^{iw_kσ_y x} e^{iv_kσ_x p} for k = 1..len(u).

    The coefficients are external inputs; nothing is defaulted here.
    Within a round the p-gate is applied first, matching the printed product.
    """
    if u is None or w is None or v is None:
        raise MissingParams("u, w and v coefficient lists must all be supplied")
    if not len(u) == len(w) == len(v):
        raise MissingParams(f"coefficient lists differ in length: {len(u)}, {len(w)}, {len(v)}")
    gates = []
    for uk, wk, vk in zip(u, w, v):
        for axis, c in ((SdfAxis.SX_P, vk), (SdfAxis.SY_X, wk), (SdfAxis.SX_X, uk)):
            if c != 0:
                gates.append(SdfGate(axis, abs(float(c)), 1 if c >= 0 else -1))
    return GateSequence(gates, r, f"hastrup_N{len(u)}")


def load_hastrup_params(path) -> dict:
    """Read {u, w, v, r} from a YAML file (see examples/hastrup_params.yaml)."""
    import yaml

    data = yaml.safe_load(Path(path).read_text())
    missing = [k for k in ("u", "w", "v") if k not in (data or {})]
    if missing:
        raise MissingParams(f"{path} lacks {missing}")
    return data


def apply_sequence(seq: GateSequence, space) -> np.ndarray:
    """Hybrid ket after the gates act on |↓⟩ ⊗ S(r)|0⟩."""
    sp = fock._as_space(space)
    osc = fock.squeeze(seq.r, sp) @ fock.fock_state(0, sp)
    psi = fock.hybrid_state(fock.DOWN, osc)
    for g in seq.gates:
        psi = g.unitary(sp) @ psi
    return psi


@dataclass
class SequenceResult:
    infidelity: float
    duration: float
    label: str
    target_db: float


def evaluate_sequence(seq: GateSequence, target: GkpSpec, space, model: DurationModel = DurationModel()) -> SequenceResult:
    """Infidelity of the reduced oscillator state against the code word."""
    sp = fock._as_space(space)
    psi = apply_sequence(seq, sp)
    rho = fock.partial_trace_qubit(psi)
    t = gkp_state(target, sp, tail_tol=1e-3)
    f = fock.state_fidelity(rho, t)
    return SequenceResult(1 - f, seq.duration(model), seq.label, target.squeezing_db)


def write_comparison_csv(path, rows) -> None:
    """rows: iterables of (method, target_delta_db, infidelity, duration_us)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "target_delta_db", "infidelity", "duration_us"])
        for method, db, inf, dur in rows:
            wr.writerow([method, f"{db:.4f}", f"{inf:.6g}", f"{dur:.2f}"])
