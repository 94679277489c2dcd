"""Finite-element modes and quasi-phase-matched second-harmonic generation in diffused channel waveguides."""

__version__ = "0.1.0"

from .materials import DispersionModel, NonlinearTensor, PolingSpec, WaveguideGeometry  # noqa: E402
from .modes import mode_census, solve_modes  # noqa: E402
from .scan import Device, ModeBank, SolverSettings, optimal_poling_period  # noqa: E402
from .shg import ProcessTriple, PumpSpec, sh_spectrum  # noqa: E402

__all__ = [
    "Device", "DispersionModel", "ModeBank", "NonlinearTensor", "PolingSpec", "ProcessTriple", "PumpSpec",
    "SolverSettings", "WaveguideGeometry", "mode_census", "optimal_poling_period", "sh_spectrum", "solve_modes",
]
