"""Design, simulation and certification of phase-modulated sideband pulses for bosonic states."""

__version__ = "0.1.0"
