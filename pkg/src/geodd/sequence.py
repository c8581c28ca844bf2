"""Geometric bit-flip gate, decoupling sequences and their propagation.

Propagation is batched over bath realizations: a batch of ``M`` baths is
pushed through one sequence at once.  Pure states without a dissipator take
the unitary path (products of exact segment propagators).  With a dissipator
the density matrix is integrated by a fixed-step fourth-order Runge-Kutta
scheme in the interaction picture of the segment Hamiltonian, so the coherent
part is exact and the step size only controls the dissipative error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    BathRealization,
    Dissipator,
    DriveParams,
    diagonal_energies,
    rotating_hamiltonian,
)
from .qutrit import BRIGHT_DARK, as_density, populations_batch, propagator

DEFAULT_DT = 0.004  # us
EDGE_CONVENTIONS = ("half", "full")

#: Ideal flip in the m_s basis: -1 on |+> and |0>, +1 on |->.
IDEAL_FLIP = BRIGHT_DARK.conj().T @ np.diag([-1.0, -1.0, 1.0]) @ BRIGHT_DARK


class StepSizeError(RuntimeError):
    """Lindblad integration lost trace beyond tolerance; reduce ``dt``."""


@dataclass(frozen=True)
class PulseSegment:
    duration: float
    drive_on: bool
    drive: DriveParams

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be non-negative")


@dataclass(frozen=True)
class DDSequence:
    gate_count: int
    interval: float
    edge_convention: str
    segments: tuple
    drive: DriveParams

    @property
    def total_duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    @property
    def free_time(self) -> float:
        return math.fsum(s.duration for s in self.segments if not s.drive_on)


@dataclass(frozen=True)
class SimulationResult:
    final_state: np.ndarray
    p_plus: float
    p_zero: float
    p_minus: float
    fidelity_vs_target: float
    total_time: float


def gate_duration(drive: DriveParams) -> float:
    """Length (us) of the cyclic 2pi rotation in the operational space."""
    rate = math.hypot(drive.omega, drive.delta) if drive.generalized_rabi else drive.omega
    return (1.0 + drive.pulse_length_error) * 2.0 * math.pi / rate


def geometric_flip_unitary(drive: DriveParams, splitting=0.0, detuning_offset=0.0) -> np.ndarray:
    """Propagator of one geometric bit-flip gate (stacked if ``splitting`` is an array).

    The gate length is set from the nominal drive; ``detuning_offset`` (kHz)
    only enters the Hamiltonian.
    """
    h = rotating_hamiltonian(drive, splitting, True, detuning_offset)
    return propagator(h, gate_duration(drive))


def build_dd_sequence(n: int, tau: float, drive: DriveParams, edge_convention: str = "half") -> DDSequence:
    """N geometric flips separated by free intervals ``tau`` (us).

    ``"half"``: tau/2, gate, tau, gate, ..., gate, tau/2.  ``"full"``: (gate, tau) x N.
    Zero-length free segments are dropped.
    """
    if n < 1:
        raise ValueError("gate count must be at least 1")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if edge_convention not in EDGE_CONVENTIONS:
        raise ValueError(f"edge_convention must be one of {EDGE_CONVENTIONS}")
    gate = PulseSegment(gate_duration(drive), True, drive)
    free = PulseSegment(tau, False, drive)
    segs: list[PulseSegment] = []
    if edge_convention == "half":
        pad = PulseSegment(tau / 2, False, drive)
        segs.append(pad)
        for k in range(n):
            segs.append(gate)
            segs.append(free if k < n - 1 else pad)
    else:
        for _ in range(n):
            segs.extend((gate, free))
    segs = [s for s in segs if s.duration > 0]
    return DDSequence(n, float(tau), edge_convention, tuple(segs), drive)


def ideal_target(initial, n: int) -> np.ndarray:
    """Initial state advanced by ``n`` ideal flips (density operator)."""
    g = np.linalg.matrix_power(IDEAL_FLIP, n)
    rho = as_density(initial)
    return g @ rho @ g.conj().T


# --- superoperator helpers (row-major vectorization) -------------------------

def _adjoint_action(u: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> u rho u^dagger for a stack ``(M, 3, 3)``."""
    m = u.shape[0]
    return np.einsum("mij,mkl->mikjl", u, u.conj()).reshape(m, 9, 9)


def _rk4_step_maps(h: np.ndarray, dsup: np.ndarray, step: float) -> np.ndarray:
    """One interaction-picture RK4 step of length ``step`` for each Hamiltonian in ``h``."""
    m = h.shape[0]
    w, v = np.linalg.eigh(h)
    vh = np.swapaxes(v, -1, -2).conj()

    def unitary(s):
        return (v * np.exp(-1j * w * s)[:, None, :]) @ vh

    def frame(s):
        a = _adjoint_action(unitary(s))
        return np.swapaxes(a, -1, -2).conj() @ dsup @ a

    eye = np.eye(9)
    f0 = np.broadcast_to(dsup, (m, 9, 9))
    f1 = frame(step / 2)
    f2 = frame(step)
    k1 = f0
    k2 = f1 @ (eye + 0.5 * step * k1)
    k3 = f1 @ (eye + 0.5 * step * k2)
    k4 = f2 @ (eye + step * k3)
    tilde = eye + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return _adjoint_action(unitary(step)) @ tilde


def _n_steps(duration: float, dt: float) -> tuple[int, float]:
    n = max(1, int(math.ceil(duration / dt - 1e-9)))
    return n, duration / n


class BatchPropagator:
    """Propagates a fixed batch of bath realizations through decoupling sequences.

    Gate propagators that do not depend on absolute time are cached, so
    scanning ``tau`` or ``N`` over the same batch reuses them.

    Parameters
    ----------
    baths : sequence of BathRealization
        One entry per realization.  OU paths, when present, must share a grid.
    dissipator : Dissipator, optional
        Selects the Lindblad path when non-empty.
    dt : float
        Integration step (us) for the Lindblad path and for time-dependent
        splittings during gates.
    """

    def __init__(self, baths: Sequence[BathRealization], dissipator: Optional[Dissipator] = None,
                 dt: float = DEFAULT_DT):
        if not dt > 0:
            raise ValueError("dt must be positive")
        if len(baths) == 0:
            raise ValueError("need at least one bath realization")
        self.dt = dt
        self.splittings = np.array([b.splitting for b in baths], dtype=float)
        self.offsets = np.array([b.detuning_offset for b in baths], dtype=float)
        self.size = len(baths)
        paths = [b.ou for b in baths]
        if all(p is None for p in paths):
            self.ou_values = None
            self.ou_dt = None
        elif any(p is None for p in paths):
            raise ValueError("either all or none of the baths must carry an OU path")
        else:
            grid = paths[0].times
            for p in paths[1:]:
                if p.times.shape != grid.shape or not np.array_equal(p.times, grid):
                    raise ValueError("OU paths in one batch must share a time grid")
            self.ou_values = np.stack([p.values for p in paths])
            self.ou_dt = paths[0].dt
            if np.isfinite(self.ou_dt):
                self._ou_cum = np.concatenate(
                    [np.zeros((self.size, 1)), np.cumsum(self.ou_values, axis=1) * self.ou_dt], axis=1)
        self.dissipator = dissipator if dissipator else None
        self._dsup = self.dissipator.superoperator() if self.dissipator else None
        self._covariant = bool(self.dissipator and self.dissipator.is_phase_covariant)
        self._cache: dict = {}

    # -- splitting and phases --------------------------------------------------

    def _splitting_at(self, t: float) -> np.ndarray:
        if self.ou_values is None:
            return self.splittings
        k = min(int(math.floor(t / self.ou_dt)), self.ou_values.shape[1] - 1)
        return self.splittings + self.ou_values[:, k]

    def _ou_integral(self, t: float) -> np.ndarray:
        k = self.ou_values.shape[1]
        if not np.isfinite(self.ou_dt):
            return self.ou_values[:, 0] * t
        idx = min(int(math.floor(t / self.ou_dt)), k - 1)
        return self._ou_cum[:, idx] + self.ou_values[:, idx] * (t - idx * self.ou_dt)

    def _free_phases(self, drive: DriveParams, t0: float, duration: float) -> np.ndarray:
        """Accumulated phase ``int E dt`` of each level over a drive-off segment, shape (M, 3)."""
        base = diagonal_energies(drive, self.splittings, self.offsets) * duration
        if self.ou_values is not None:
            integral = self._ou_integral(t0 + duration) - self._ou_integral(t0)
            base = base + np.pi * integral[:, None] * np.array([1.0, 0.0, -1.0])
        return base

    # -- unitary path ----------------------------------------------------------

    def _gate_unitary(self, seg: PulseSegment, t0: float) -> np.ndarray:
        if self.ou_values is None:
            key = ("U", seg.drive, seg.duration)
            if key not in self._cache:
                h = rotating_hamiltonian(seg.drive, self.splittings, True, self.offsets)
                self._cache[key] = propagator(h, seg.duration)
            return self._cache[key]
        n, step = _n_steps(seg.duration, self.dt)
        u = np.broadcast_to(np.eye(3, dtype=complex), (self.size, 3, 3))
        for k in range(n):
            h = rotating_hamiltonian(seg.drive, self._splitting_at(t0 + (k + 0.5) * step), True,
                                     self.offsets)
            u = propagator(h, step) @ u
        return u

    def _run_unitary(self, states: np.ndarray, seq: DDSequence) -> np.ndarray:
        ket = states.ndim == 2
        t = 0.0
        for seg in seq.segments:
            if seg.drive_on:
                u = self._gate_unitary(seg, t)
                if ket:
                    states = np.einsum("mij,mj->mi", u, states)
                else:
                    states = u @ states @ np.swapaxes(u, -1, -2).conj()
            else:
                phase = np.exp(-1j * self._free_phases(seg.drive, t, seg.duration))
                if ket:
                    states = phase * states
                else:
                    states = phase[:, :, None] * states * phase.conj()[:, None, :]
            t += seg.duration
        return states

    # -- Lindblad path ---------------------------------------------------------

    def _dissipative_power(self, duration: float) -> np.ndarray:
        n, step = _n_steps(duration, self.dt)
        key = ("D", n, step)
        if key not in self._cache:
            d = self._dsup * step
            # RK4 polynomial of a constant generator
            single = np.eye(9) + d + d @ d / 2 + d @ d @ d / 6 + d @ d @ d @ d / 24
            self._cache[key] = np.linalg.matrix_power(single, n)
        return self._cache[key]

    def _segment_maps(self, seg: PulseSegment, t0: float, cacheable: bool):
        n, step = _n_steps(seg.duration, self.dt)
        if cacheable:
            key = ("L", seg.drive, seg.drive_on, seg.duration)
            if key not in self._cache:
                h = rotating_hamiltonian(seg.drive, self.splittings, seg.drive_on, self.offsets)
                self._cache[key] = np.linalg.matrix_power(_rk4_step_maps(h, self._dsup, step), n)
            return [self._cache[key]]
        maps = []
        for k in range(n):
            h = rotating_hamiltonian(seg.drive, self._splitting_at(t0 + (k + 0.5) * step),
                                     seg.drive_on, self.offsets)
            maps.append(_rk4_step_maps(h, self._dsup, step))
        return maps

    def _run_lindblad(self, rho: np.ndarray, seq: DDSequence) -> np.ndarray:
        vec = rho.reshape(self.size, 9)
        t = 0.0
        static = self.ou_values is None
        for seg in seq.segments:
            # an unstable step overflows; the trace check below reports it
            with np.errstate(over="ignore", invalid="ignore"):
                if not seg.drive_on and self._covariant:
                    # diagonal H commutes with a phase-covariant dissipator
                    vec = (vec[:, None, :] * self._dissipative_power(seg.duration)).sum(axis=-1)
                    phase = np.exp(-1j * self._free_phases(seg.drive, t, seg.duration))
                    vec = (phase[:, :, None] * phase.conj()[:, None, :]).reshape(self.size, 9) * vec
                else:
                    for smap in self._segment_maps(seg, t, static):
                        vec = np.einsum("mij,mj->mi", smap, vec)
                drift = np.max(np.abs(vec[:, 0] + vec[:, 4] + vec[:, 8] - 1.0))
            t += seg.duration
            if not drift <= 1e-6:
                raise StepSizeError(f"trace drifted by {drift:.3g} at t = {t:.6g} us; reduce dt")
        return vec.reshape(self.size, 3, 3)

    # -- public ----------------------------------------------------------------

    def run(self, initial, seq: DDSequence) -> np.ndarray:
        """Final states for every realization: kets ``(M, 3)`` or densities ``(M, 3, 3)``."""
        initial = np.asarray(initial, dtype=complex)
        if self.dissipator is None:
            if initial.ndim == 1:
                start = np.broadcast_to(initial, (self.size, 3)).copy()
            else:
                start = np.broadcast_to(as_density(initial), (self.size, 3, 3)).copy()
            return self._run_unitary(start, seq)
        start = np.broadcast_to(as_density(initial), (self.size, 3, 3)).copy()
        return self._run_lindblad(start, seq)


def observables(final_states: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-realization ``(p_plus, p_zero, p_minus, fidelity)``, shape (M, 4)."""
    pops = populations_batch(final_states)
    # elementwise products keep every row independent of the batch size
    if final_states.ndim == 2:
        fid = np.real((final_states.conj()[:, :, None] * target * final_states[:, None, :]).sum(axis=(1, 2)))
    else:
        fid = np.real((final_states * target.T).sum(axis=(1, 2)))
    return np.column_stack([pops, fid])


def propagate_sequence(initial, seq: DDSequence, bath: Optional[BathRealization] = None,
                       dissipator: Optional[Dissipator] = None, dt: float = DEFAULT_DT) -> SimulationResult:
    """Push one state through ``seq`` under a single bath realization."""
    bath = bath if bath is not None else BathRealization()
    engine = BatchPropagator([bath], dissipator, dt)
    final = engine.run(initial, seq)
    obs = observables(final, ideal_target(initial, seq.gate_count))[0]
    state = final[0]
    if state.ndim == 1:
        state = np.outer(state, state.conj())
    return SimulationResult(state, float(obs[0]), float(obs[1]), float(obs[2]), float(obs[3]),
                            seq.total_duration)
