"""Piecewise-constant phase waveforms and their JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class Segment:
    dt: float
    phi_r: float
    phi_b: float


@dataclass
class Waveform:
    """Sideband phases per segment at constant Rabi rates.

    Rabi rates are stored in Hz (Ω/2π) so that the JSON round trip is
    bit-exact; ``omega_r``/``omega_b`` give the angular values.
    """

    dt: np.ndarray
    phi_r: np.ndarray
    phi_b: np.ndarray
    omega_r_hz: float = 2000.0
    omega_b_hz: float = 2000.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dt = np.atleast_1d(np.asarray(self.dt, dtype=float))
        self.phi_r = np.atleast_1d(np.asarray(self.phi_r, dtype=float))
        self.phi_b = np.atleast_1d(np.asarray(self.phi_b, dtype=float))
        if not (self.dt.shape == self.phi_r.shape == self.phi_b.shape):
            raise ValueError("dt, phi_r and phi_b must have the same length")
        if self.dt.size and np.any(self.dt <= 0):
            raise ValueError("segment durations must be positive")

    @classmethod
    def uniform(cls, duration, phi_r, phi_b, omega_r_hz=2000.0, omega_b_hz=2000.0):
        phi_r = np.asarray(phi_r, dtype=float)
        n = phi_r.size
        return cls(np.full(n, duration / n), phi_r, phi_b, omega_r_hz, omega_b_hz)

    @classmethod
    def empty(cls, omega_r_hz=2000.0, omega_b_hz=2000.0):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), omega_r_hz, omega_b_hz)

    @property
    def n_segments(self) -> int:
        return int(self.dt.size)

    @property
    def duration(self) -> float:
        return float(np.sum(self.dt))

    @property
    def omega_r(self) -> float:
        return TWO_PI * self.omega_r_hz

    @property
    def omega_b(self) -> float:
        return TWO_PI * self.omega_b_hz

    @property
    def constant_amplitude(self) -> bool:
        return self.omega_r_hz == self.omega_b_hz

    def segments(self):
        for dt, pr, pb in zip(self.dt, self.phi_r, self.phi_b):
            yield Segment(float(dt), float(pr), float(pb))

    def to_dict(self) -> dict:
        out = {
            "omega_r_hz": float(self.omega_r_hz),
            "omega_b_hz": float(self.omega_b_hz),
            "segments": [
                {"dt_s": float(s.dt), "phi_r_rad": float(s.phi_r), "phi_b_rad": float(s.phi_b)}
                for s in self.segments()
            ],
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Waveform":
        segs = data["segments"]
        return cls(
            [s["dt_s"] for s in segs],
            [s["phi_r_rad"] for s in segs],
            [s["phi_b_rad"] for s in segs],
            float(data["omega_r_hz"]),
            float(data["omega_b_hz"]),
            dict(data.get("meta", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Waveform":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Waveform):
            return NotImplemented
        return (
            np.array_equal(self.dt, other.dt)
            and np.array_equal(self.phi_r, other.phi_r)
            and np.array_equal(self.phi_b, other.phi_b)
            and self.omega_r_hz == other.omega_r_hz
            and self.omega_b_hz == other.omega_b_hz
        )
