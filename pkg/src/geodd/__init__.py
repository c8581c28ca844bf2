"""Simulation and analysis of dynamical decoupling with geometric spin-1 gates."""

from .analysis import (
    DipReport,
    FitError,
    FitResult,
    find_dips,
    fit_coherence_envelope,
    fit_gate_error,
    fit_power_law,
    pure_coherence_time,
)
from .config import ConfigError, RunConfig, load_config, validate_config
from .ensemble import EnsembleResult, EnsembleSpec, run_ensemble, sweep_leakage_map, tau_scan
from .model import DriveParams, NoiseModel, build_dissipator, rotating_hamiltonian, sample_bath_realization
from .qutrit import InvalidHamiltonianError, InvalidStateError, basis_state, populations, propagator
from .sequence import StepSizeError, build_dd_sequence, gate_duration, propagate_sequence

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DipReport", "DriveParams", "EnsembleResult", "EnsembleSpec", "FitError",
    "FitResult", "InvalidHamiltonianError", "InvalidStateError", "NoiseModel", "RunConfig",
    "StepSizeError", "basis_state", "build_dd_sequence", "build_dissipator", "find_dips",
    "fit_coherence_envelope", "fit_gate_error", "fit_power_law", "gate_duration", "load_config",
    "populations", "propagate_sequence", "propagator", "pure_coherence_time", "rotating_hamiltonian",
    "run_ensemble", "sample_bath_realization", "sweep_leakage_map", "tau_scan", "validate_config",
]
