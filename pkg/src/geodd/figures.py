"""Desk-scale analogs of the leakage maps and coherence-time studies.

Each ``figN`` function returns plain data (arrays, dicts) and a manifest of
every parameter used; writing files is left to the caller.
"""

from __future__ import annotations

import math
from dataclasses import asdict

import numpy as np

from . import analysis
from .ensemble import EnsembleSpec, coherence_decay, sweep_leakage_map, tau_scan
from .model import DriveParams, NoiseModel, build_dissipator
from .qutrit import basis_state
from .sequence import DEFAULT_DT

FIGURES = ("fig2a", "fig2b", "fig3a", "fig3c")

RABI_MHZ = 25.0
DETUNING_KHZ = 130.0
T1_MS = 2.6
C13_WIDTH_MHZ = 0.3
N14_SPLITTING_MHZ = 2.2

MAP_SPLITTINGS = np.linspace(-4.0, 4.0, 81)
MAP_TAUS = np.linspace(0.5, 30.0, 60)
MAP_N = (1, 2, 4, 8)

FIG3A_N = (1, 2, 4, 8, 16, 32, 64, 128)
FIG3A_TAU_US = 3.85  # half of the first resonance interval
FIG3A_SAMPLES = 500

FIG3C_N = (1, 2, 4, 8, 16, 32)
FIG3C_TIMES_US = np.geomspace(5.0, 8000.0, 24)
FIG3C_SAMPLES = 96
FIG3C_OU_AMPLITUDE_MHZ = 0.02
FIG3C_OU_TAU_US = 200.0


def nv_noise(**overrides) -> NoiseModel:
    """Static NV bath: Gaussian 13C broadening plus 14N hyperfine lines, finite T1."""
    params = dict(c13_width_1e=C13_WIDTH_MHZ, n14_splitting=N14_SPLITTING_MHZ, t1=T1_MS)
    params.update(overrides)
    return NoiseModel(**params)


def _drive_dict(drive: DriveParams) -> dict:
    return asdict(drive)


def _noise_dict(noise: NoiseModel) -> dict:
    d = asdict(noise)
    d["t1"] = None if math.isinf(d["t1"]) else d["t1"]
    return d


def leakage_map(detuning_khz: float, threads: int = 1):
    """Deterministic |+> population map over (splitting, tau, N) for one detuning."""
    drive = DriveParams(RABI_MHZ, detuning_khz)
    result = sweep_leakage_map(MAP_SPLITTINGS, MAP_TAUS, MAP_N, drive, threads=threads)
    manifest = {
        "drive": _drive_dict(drive),
        "splitting_mhz": {"min": float(MAP_SPLITTINGS[0]), "max": float(MAP_SPLITTINGS[-1]),
                          "count": int(MAP_SPLITTINGS.size)},
        "tau_us": {"start": float(MAP_TAUS[0]), "stop": float(MAP_TAUS[-1]), "count": int(MAP_TAUS.size)},
        "n_list": list(MAP_N),
        "initial_state": "plus",
        "edge_convention": "half",
    }
    return result, manifest


def fidelity_vs_gate_count(seed: int = 0, samples: int = FIG3A_SAMPLES, threads: int = 1):
    """Ensemble fidelity of |+> after N gates at a non-resonant interval, with the gate-error fit."""
    drive = DriveParams(RABI_MHZ, DETUNING_KHZ)
    noise = nv_noise()
    spec = EnsembleSpec(samples, seed, noise)
    dissipator = build_dissipator(noise.t1)
    plus = basis_state("plus")
    fid, err = [], []
    for n in FIG3A_N:
        scan = tau_scan(plus, n, [FIG3A_TAU_US], drive, spec, dissipator, threads=threads)
        fid.append(float(scan.column("fidelity")[0]))
        err.append(float(scan.stderr[0, 3]))
    fit = analysis.fit_gate_error(FIG3A_N, fid)
    manifest = {"drive": _drive_dict(drive), "noise": _noise_dict(noise), "tau_us": FIG3A_TAU_US,
                "n_list": list(FIG3A_N), "samples": samples, "seed": seed, "dt_us": DEFAULT_DT,
                "t1_convention": "coherence"}
    return np.array(FIG3A_N), np.array(fid), np.array(err), fit, manifest


def coherence_times(seed: int = 0, samples: int = FIG3C_SAMPLES, n_list=FIG3C_N,
                    total_times_us=FIG3C_TIMES_US, t1_ms: float = T1_MS,
                    ou_amplitude: float = FIG3C_OU_AMPLITUDE_MHZ, ou_tau: float = FIG3C_OU_TAU_US,
                    threads: int = 1):
    """T2 versus gate count under an OU splitting bath plus T1, and T2_pure from the T1 budget.

    Returns ``(curves, table, power_fit, manifest)``: ``curves`` maps N to
    ``(times_ms, amplitude, stderr)``; ``table`` rows are
    ``(N, T2, T2_err, T2_pure, T2_pure_err)`` in ms with ``None`` where T2
    reaches T1.
    """
    drive = DriveParams(RABI_MHZ, DETUNING_KHZ)
    noise = NoiseModel(t1=t1_ms, ou_amplitude=ou_amplitude, ou_correlation_time=ou_tau)
    spec = EnsembleSpec(samples, seed, noise)
    dissipator = build_dissipator(t1_ms)
    times = np.asarray(total_times_us, dtype=float)
    curves, table = {}, []
    for n in n_list:
        mean, err = coherence_decay(n, times, drive, spec, dissipator, threads=threads)
        amp = np.clip(mean, 0.0, 1.05)
        fit = analysis.fit_coherence_envelope(times * 1e-3, amp)
        t2, t2_err = fit["t2"], fit.standard_errors["t2"]
        if math.isfinite(t1_ms) and t2 < t1_ms * (1 - 1e-9):
            pure, pure_err = analysis.pure_coherence_time_with_error(t2, t1_ms, t2_err)
        elif math.isinf(t1_ms):
            pure, pure_err = t2, t2_err
        else:
            pure = pure_err = None
        curves[n] = (times * 1e-3, mean, err)
        table.append((n, t2, t2_err, pure, pure_err))
    valid = [(row[0], row[3], row[4]) for row in table if row[3] is not None and row[4] > 0]
    power = analysis.fit_power_law(*zip(*valid)) if len(valid) >= 3 else None
    manifest = {"drive": _drive_dict(drive), "noise": _noise_dict(noise), "n_list": list(n_list),
                "total_time_us": {"start": float(times[0]), "stop": float(times[-1]), "count": int(times.size),
                                  "spacing": "geometric"},
                "samples": samples, "seed": seed, "ou_dt_us": spec.ou_dt, "dt_us": DEFAULT_DT,
                "coherence": "p_plus - p_minus", "t1_convention": "coherence"}
    return curves, table, power, manifest
