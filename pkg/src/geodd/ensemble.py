"""Monte Carlo averaging over bath realizations and deterministic parameter sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import BathRealization, Dissipator, DriveParams, NoiseModel, _seed_sequence, sample_bath_realization
from .qutrit import basis_state
from .sequence import DEFAULT_DT, BatchPropagator, build_dd_sequence, gate_duration, ideal_target, observables

OBSERVABLES = ("p_plus", "p_zero", "p_minus", "fidelity")
THREADS_ENV = "GEODD_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class EnsembleSpec:
    sample_count: int = 2000
    master_seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    ou_dt: float = 0.1

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")


@dataclass(frozen=True)
class EnsembleResult:
    """Means and standard errors of ``OBSERVABLES`` over realizations."""

    mean: np.ndarray
    stderr: np.ndarray
    sample_count: int

    def __getattr__(self, name):
        if name in OBSERVABLES:
            return float(self.mean[OBSERVABLES.index(name)])
        if name.endswith("_stderr") and name[:-7] in OBSERVABLES:
            return float(self.stderr[OBSERVABLES.index(name[:-7])])
        raise AttributeError(name)


@dataclass(frozen=True)
class ScanResult:
    """Ensemble means along one scanned axis; arrays have shape (points, 4)."""

    axis: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.mean[:, OBSERVABLES.index(name)]


@dataclass(frozen=True)
class SweepResult:
    splittings: np.ndarray
    taus: np.ndarray
    n_list: tuple
    p_plus: np.ndarray
    stderr: np.ndarray

    def rows(self):
        """Long-format rows ``(splitting, tau, n, p_plus)``: splitting-major, then tau, then N."""
        for i, s in enumerate(self.splittings):
            for j, t in enumerate(self.taus):
                for k, n in enumerate(self.n_list):
                    yield float(s), float(t), int(n), float(self.p_plus[i, j, k])


def realization_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return _seed_sequence(master_seed, index)


def sample_baths(spec: EnsembleSpec, duration: Optional[float] = None,
                 indices: Optional[Sequence[int]] = None) -> list[BathRealization]:
    """Bath realizations for ``indices`` (default: all), each seeded by ``(master_seed, index)``."""
    if indices is None:
        indices = range(spec.sample_count)
    return [sample_bath_realization(spec.noise, realization_seed(spec.master_seed, i), duration, spec.ou_dt)
            for i in indices]


def _aggregate(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = samples.shape[0]
    mean = samples.mean(axis=0)
    const = np.all(samples == samples[0], axis=0)
    mean = np.where(const, samples[0], mean)
    if m < 2:
        return mean, np.zeros_like(mean)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(m)
    return mean, np.where(const, 0.0, stderr)


def _chunks(n: int, size: int) -> list[range]:
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def _evaluate(initial, sequences, baths, dissipator, dt, threads, chunk_size):
    """Observables for every (sequence, realization): array (len(sequences), M, 4)."""
    m = len(baths)
    if not chunk_size:
        chunk_size = -(-m // threads) if threads > 1 else m
    targets = [ideal_target(initial, s.gate_count) for s in sequences]
    out = np.empty((len(sequences), m, 4))

    def work(idx: range):
        engine = BatchPropagator(baths[idx.start:idx.stop], dissipator, dt)
        for k, (seq, target) in enumerate(zip(sequences, targets)):
            out[k, idx.start:idx.stop] = observables(engine.run(initial, seq), target)

    chunks = _chunks(m, chunk_size)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        for c in chunks:
            work(c)
    return out


def run_ensemble(initial, seq, spec: EnsembleSpec, dissipator: Optional[Dissipator] = None,
                 dt: float = DEFAULT_DT, threads: Optional[int] = None,
                 chunk_size: Optional[int] = None) -> EnsembleResult:
    """Mean and standard error of the populations and fidelity over ``spec.sample_count`` baths.

    Realization ``i`` always uses the seed derived from ``(master_seed, i)`` and
    results are reduced in index order, so thread count and chunking do not
    change a single bit of the output.
    """
    baths = sample_baths(spec, seq.total_duration)
    samples = _evaluate(initial, [seq], baths, dissipator, dt,
                        threads or default_threads(), chunk_size)[0]
    mean, stderr = _aggregate(samples)
    return EnsembleResult(mean, stderr, len(baths))


def _scan(initial, sequences, axis, spec, dissipator, dt, threads, chunk_size) -> ScanResult:
    duration = max(s.total_duration for s in sequences)
    baths = sample_baths(spec, duration)
    samples = _evaluate(initial, sequences, baths, dissipator, dt,
                        threads or default_threads(), chunk_size)
    stats = [_aggregate(s) for s in samples]
    return ScanResult(np.asarray(axis, dtype=float), np.array([s[0] for s in stats]),
                      np.array([s[1] for s in stats]))


def tau_scan(initial, n_gates: int, taus, drive: DriveParams, spec: EnsembleSpec,
             dissipator: Optional[Dissipator] = None, edge_convention: str = "half",
             dt: float = DEFAULT_DT, threads: Optional[int] = None,
             chunk_size: Optional[int] = None) -> ScanResult:
    """Ensemble-averaged observables versus gate interval.

    Every tau point sees the same bath realizations, so the curve is smooth in
    tau even for modest sample counts.
    """
    sequences = [build_dd_sequence(n_gates, float(t), drive, edge_convention) for t in taus]
    return _scan(initial, sequences, taus, spec, dissipator, dt, threads, chunk_size)


def coherence_decay(n_gates: int, total_times, drive: DriveParams, spec: EnsembleSpec,
                    dissipator: Optional[Dissipator] = None, initial=None,
                    edge_convention: str = "half", dt: float = DEFAULT_DT,
                    threads: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Qubit coherence ``p_plus - p_minus`` after ``n_gates`` flips spread over each total time (us).

    The gate interval is chosen so the whole sequence lasts ``total_time``.
    Returns the ensemble mean and its standard error.
    """
    initial = basis_state("plus") if initial is None else initial
    tg = gate_duration(drive)
    taus = []
    for total in total_times:
        tau = total / n_gates - tg
        if tau < 0:
            raise ValueError(f"total time {total} us is shorter than {n_gates} gates")
        taus.append(tau)
    sequences = [build_dd_sequence(n_gates, t, drive, edge_convention) for t in taus]
    duration = max(s.total_duration for s in sequences)
    baths = sample_baths(spec, duration)
    samples = _evaluate(initial, sequences, baths, dissipator, dt, threads or default_threads(), None)
    contrast = samples[:, :, 0] - samples[:, :, 2]
    mean, stderr = _aggregate(contrast.T)
    return mean, stderr


def sweep_leakage_map(splittings, taus, n_list, drive: DriveParams, initial=None,
                      edge_convention: str = "half", threads: Optional[int] = None) -> SweepResult:
    """|+> population after decoupling on a (splitting, tau, N) grid.

    Deterministic: each splitting value is a bath realization in its own
    right, so no sampling is involved and the standard errors are zero.
    """
    splittings = np.asarray(splittings, dtype=float)
    taus = np.asarray(taus, dtype=float)
    n_list = tuple(int(n) for n in n_list)
    if splittings.size == 0 or taus.size == 0 or len(n_list) == 0:
        raise ValueError("sweep grids must be non-empty")
    initial = basis_state("plus") if initial is None else initial
    baths = [BathRealization(float(s)) for s in splittings]
    sequences = [build_dd_sequence(n, float(t), drive, edge_convention) for t in taus for n in n_list]
    samples = _evaluate(initial, sequences, baths, None, DEFAULT_DT,
                        threads or default_threads(), None)
    values = samples[:, :, 0].reshape(len(taus), len(n_list), len(splittings)).transpose(2, 0, 1)
    return SweepResult(splittings, taus, n_list, values, np.zeros_like(values))
