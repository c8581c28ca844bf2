"""Rotating-frame Hamiltonian and the environment acting on it.

Public parameters use ordinary frequencies in MHz, except the detuning in
kHz.  The 2*pi factor is applied here; everything downstream works in rad/us
and us.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .qutrit import spin_operator

TWO_PI = 2.0 * np.pi

_SX = spin_operator("x")
_SY = spin_operator("y")


def _seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Counter-based child seed: same ``(seed, key)`` always gives the same stream."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


@dataclass(frozen=True)
class DriveParams:
    """Microwave drive settings.

    Parameters
    ----------
    rabi : float
        Rabi frequency Omega/2pi in MHz.
    detuning : float
        Detuning Delta/2pi in kHz.
    phase : float
        Drive phase in radians; selects the rotation axis ``cos(phase) Sx + sin(phase) Sy``.
    pulse_length_error : float
        Fractional pulse-length (rotation angle) error, 0 for an ideal gate.
    generalized_rabi : bool
        Time gates by the generalized Rabi period ``2pi/sqrt(Omega^2 + Delta^2)``
        (default) or by the bare ``2pi/Omega``.
    """

    rabi: float = 25.0
    detuning: float = 0.0
    phase: float = 0.0
    pulse_length_error: float = 0.0
    generalized_rabi: bool = True

    def __post_init__(self):
        if not self.rabi > 0:
            raise ValueError(f"rabi must be positive, got {self.rabi}")
        if not abs(self.pulse_length_error) < 0.5:
            raise ValueError("|pulse_length_error| must be below 0.5")

    @property
    def omega(self) -> float:
        """Rabi angular frequency in rad/us."""
        return TWO_PI * self.rabi

    @property
    def delta(self) -> float:
        """Detuning angular frequency in rad/us."""
        return TWO_PI * self.detuning * 1e-3


@dataclass(frozen=True)
class NoiseModel:
    """Classical noise ensemble acting on the qubit splitting and the detuning.

    Widths and amplitudes are in MHz, ``t1`` in ms, ``ou_correlation_time``
    in us and ``detuning_jitter`` (a standard deviation) in kHz.
    """

    c13_width_1e: float = 0.0
    n14_splitting: float = 0.0
    t1: float = math.inf
    ou_amplitude: float = 0.0
    ou_correlation_time: float = 100.0
    detuning_jitter: float = 0.0

    def __post_init__(self):
        for name in ("c13_width_1e", "n14_splitting", "ou_amplitude", "ou_correlation_time",
                     "detuning_jitter"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.t1 > 0:
            raise ValueError("t1 must be positive or infinite")

    @property
    def c13_sigma(self) -> float:
        """Gaussian standard deviation whose density falls to 1/e at +-width/2."""
        return self.c13_width_1e / (2.0 * math.sqrt(2.0))

    @property
    def is_static(self) -> bool:
        return self.ou_amplitude == 0


@dataclass(frozen=True)
class OUTrajectory:
    """Splitting noise sampled on a uniform grid, held piecewise constant between samples."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory time grid must be strictly increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else math.inf

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def at(self, t):
        idx = np.clip(np.floor(np.asarray(t) / self.dt).astype(int), 0, len(self.values) - 1)
        return self.values[idx]

    def cumulative(self, t):
        """Integral of the held path from 0 to ``t`` (MHz*us)."""
        return _held_integral(self.values[None, :], self.dt, np.asarray(t, dtype=float))[0]


def _held_integral(values: np.ndarray, dt: float, t) -> np.ndarray:
    """Integral from 0 to ``t`` of piecewise-constant rows of ``values`` (shape (M, K))."""
    t = np.asarray(t, dtype=float)
    k = values.shape[1]
    if not np.isfinite(dt):
        return values[:, 0:1] * t
    cum = np.concatenate([np.zeros((values.shape[0], 1)), np.cumsum(values, axis=1) * dt], axis=1)
    idx = np.clip(np.floor(t / dt).astype(int), 0, k - 1)
    return cum[:, idx] + values[:, idx] * (t - idx * dt)


@dataclass(frozen=True)
class BathRealization:
    """One draw of the environment: static splitting (MHz), detuning offset (kHz), optional OU path."""

    splitting: float = 0.0
    detuning_offset: float = 0.0
    ou: Optional[OUTrajectory] = None

    def __post_init__(self):
        if not (math.isfinite(self.splitting) and math.isfinite(self.detuning_offset)):
            raise ValueError("bath values must be finite")


@dataclass(frozen=True)
class Dissipator:
    """Lindblad jump operators with rates in 1/ms."""

    jumps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for op, rate in self.jumps:
            if np.shape(op) != (3, 3):
                raise ValueError("jump operators must be 3x3")
            if rate < 0:
                raise ValueError("jump rates must be non-negative")

    def __bool__(self) -> bool:
        return any(rate > 0 for _, rate in self.jumps)

    def superoperator(self) -> np.ndarray:
        """9x9 generator (1/us) acting on row-major vectorized density matrices."""
        eye = np.eye(3)
        out = np.zeros((9, 9), dtype=complex)
        for op, rate in self.jumps:
            op = np.asarray(op, dtype=complex)
            g = rate * 1e-3
            ldl = op.conj().T @ op
            out += g * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
        return out

    @property
    def is_phase_covariant(self) -> bool:
        """True when every jump is a single basis transition |a><b|.

        Such dissipators commute with evolution under any diagonal Hamiltonian.
        """
        return all(np.count_nonzero(np.asarray(op)) <= 1 for op, _ in self.jumps)


def rotating_hamiltonian(drive: DriveParams, splitting=0.0, drive_on: bool = True,
                         detuning_offset=0.0) -> np.ndarray:
    """Rotating-frame Hamiltonian in rad/us.

    ``H = -Delta (|+1><+1| + |-1><-1|) + pi*splitting (|+1><+1| - |-1><-1|) + drive_on (Omega/2) S_phase``

    ``splitting`` (MHz) and ``detuning_offset`` (kHz) broadcast; array inputs
    give a stack of shape ``(..., 3, 3)``.
    """
    splitting = np.asarray(splitting, dtype=float)
    det = drive.delta + TWO_PI * np.asarray(detuning_offset, dtype=float) * 1e-3
    splitting, det = np.broadcast_arrays(splitting, det)
    h = np.zeros(splitting.shape + (3, 3), dtype=complex)
    h[..., 0, 0] = -det + np.pi * splitting
    h[..., 2, 2] = -det - np.pi * splitting
    if drive_on:
        h = h + 0.5 * drive.omega * (np.cos(drive.phase) * _SX + np.sin(drive.phase) * _SY)
    return h


def diagonal_energies(drive: DriveParams, splitting=0.0, detuning_offset=0.0) -> np.ndarray:
    """Diagonal of the drive-off Hamiltonian, shape ``(..., 3)``."""
    splitting = np.asarray(splitting, dtype=float)
    det = drive.delta + TWO_PI * np.asarray(detuning_offset, dtype=float) * 1e-3
    splitting, det = np.broadcast_arrays(splitting, det)
    return np.stack([-det + np.pi * splitting, np.zeros_like(det), -det - np.pi * splitting], axis=-1)


def ou_trajectory(noise: NoiseModel, duration: float, dt: float, seed) -> OUTrajectory:
    """Stationary Ornstein-Uhlenbeck splitting path on ``[0, duration]`` (us), values in MHz.

    Uses the exact update ``x' = x e^{-dt/tc} + N(0, a sqrt(1 - e^{-2dt/tc}))``
    started from the stationary distribution.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = int(math.ceil(duration / dt - 1e-9)) + 1
    times = np.arange(n) * dt
    a = noise.ou_amplitude
    if a == 0:
        return OUTrajectory(times, np.zeros(n))
    if not noise.ou_correlation_time > 0:
        raise ValueError("ou_correlation_time must be positive")
    rng = np.random.default_rng(_seed_sequence(seed, 1))
    decay = math.exp(-dt / noise.ou_correlation_time)
    z = rng.standard_normal(n)
    innov = a * math.sqrt(-math.expm1(-2.0 * dt / noise.ou_correlation_time)) * z
    innov[0] = a * z[0]
    return OUTrajectory(times, lfilter([1.0], [1.0, -decay], innov))


def sample_bath_realization(noise: NoiseModel, seed, duration: Optional[float] = None,
                            ou_dt: float = 0.1) -> BathRealization:
    """Draw a bath realization deterministically from ``seed``.

    The splitting is a Gaussian 13C contribution plus one of the 14N lines
    {-A, 0, +A} chosen with equal weight.  An OU path is attached only when
    ``noise.ou_amplitude > 0`` and ``duration`` is given.
    """
    rng = np.random.default_rng(_seed_sequence(seed, 0))
    gauss, jitter = rng.standard_normal(2)
    line = int(rng.integers(3)) - 1
    splitting = noise.c13_sigma * gauss + line * noise.n14_splitting
    offset = noise.detuning_jitter * jitter
    ou = None
    if noise.ou_amplitude > 0 and duration is not None:
        ou = ou_trajectory(noise, duration, ou_dt, seed)
    return BathRealization(float(splitting), float(offset), ou)


def build_dissipator(t1: float, convention: str = "coherence") -> Dissipator:
    """Symmetric qubit<->ancilla relaxation with time constant ``t1`` (ms).

    Jumps |0><+1|, |+1><0|, |0><-1|, |-1><0| share one rate gamma.  Under the
    ``"coherence"`` convention gamma = 1/t1, so the |+1>/|-1> coherence decays
    as exp(-t/t1) and a decoherence-free run gives T2 = t1.  Under
    ``"population"`` gamma = 1/(3 t1), so the population difference between the
    {|+-1>} manifold and |0> relaxes as exp(-t/t1).
    """
    if math.isinf(t1):
        return Dissipator(())
    if not t1 > 0:
        raise ValueError(f"t1 must be positive, got {t1}")
    if convention == "coherence":
        rate = 1.0 / t1
    elif convention == "population":
        rate = 1.0 / (3.0 * t1)
    else:
        raise ValueError(f"unknown T1 convention {convention!r}")
    jumps = []
    for a, b in ((1, 0), (0, 1), (1, 2), (2, 1)):
        op = np.zeros((3, 3), dtype=complex)
        op[a, b] = 1.0
        jumps.append((op, rate))
    return Dissipator(tuple(jumps))


def resonance_taus(detuning: float, n_max: int) -> list[float]:
    """Gate intervals (us) at which free evolution under ``detuning`` (kHz) winds by 2pi*n."""
    if detuning == 0:
        raise ValueError("zero detuning has no resonance structure")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    f = abs(detuning) * 1e-3  # MHz
    return [n / f for n in range(1, n_max + 1)]
