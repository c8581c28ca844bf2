"""Curve fits and derived quantities for decoupling data.

Nonlinear fits use a small projected Levenberg-Marquardt solver with analytic
Jacobians; bounds are enforced by clamping every trial step into the box.
Standard errors come from the residual-scaled covariance ``s^2 (J^T J)^-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import median_filter


@dataclass(frozen=True)
class FitResult:
    parameters: dict
    standard_errors: dict
    residual_norm: float
    converged: bool
    iterations: int = 0

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]


@dataclass(frozen=True)
class DipReport:
    dip_positions: list = field(default_factory=list)
    widths: list = field(default_factory=list)
    depths: list = field(default_factory=list)
    mean_spacing: Optional[float] = None
    estimated_detuning: Optional[float] = None  # kHz


class FitError(ValueError):
    """Input data cannot be fitted by the requested model."""


def levenberg_marquardt(residual: Callable, jacobian: Callable, x0, lower, upper,
                        max_iter: int = 500, xtol: float = 1e-15, ftol: float = 1e-30):
    """Minimize ``0.5*|residual(x)|^2`` inside the box ``[lower, upper]``.

    Returns ``(x, jac_at_x, residual_at_x, converged, iterations)``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = residual(x)
    cost = float(r @ r)
    lam = 1e-3
    converged = cost <= ftol
    it = 0
    while not converged and it < max_iter:
        it += 1
        j = jacobian(x)
        a = j.T @ j
        g = j.T @ r
        scale = np.where(np.diag(a) > 0, np.diag(a), 1.0)
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(a + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = np.clip(x + step, lower, upper)
            r_new = residual(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                moved = np.abs(x_new - x)
                x, r = x_new, r_new
                rel_drop = (cost - cost_new) / cost
                cost = cost_new
                lam = max(lam / 10, 1e-12)
                improved = True
                if cost <= ftol or np.all(moved <= xtol * (np.abs(x) + xtol)) or rel_drop < 1e-15:
                    converged = True
                break
            lam *= 10
        if not improved:
            # no descent direction left: a (possibly bound-constrained) minimum
            converged = True
    return x, jacobian(x), r, converged, it


def _standard_errors(jac: np.ndarray, res: np.ndarray, free: np.ndarray) -> np.ndarray:
    m, n = jac.shape
    se = np.zeros(n)
    dof = m - int(free.sum())
    if dof <= 0 or not free.any():
        return se
    s2 = float(res @ res) / dof
    jf = jac[:, free]
    cov = s2 * np.linalg.pinv(jf.T @ jf)
    se[free] = np.sqrt(np.clip(np.diag(cov), 0, None))
    return se


def _as_1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise FitError(f"{name} contains non-finite values")
    return arr


# --- gate error ---------------------------------------------------------------

def gate_error_model(n, eps0: float, eps_gate: float):
    """Fidelity after ``n`` gates: ``(1 - eps0) (1 - eps_gate)^n``."""
    return (1.0 - eps0) * (1.0 - eps_gate) ** np.asarray(n, dtype=float)


def fit_gate_error(n_values, fidelities) -> FitResult:
    """Fit ``F(N) = (1 - eps0)(1 - eps_gate)^N`` by nonlinear least squares.

    Starting point: ``eps_gate`` from the log-linear slope, ``eps0`` from the
    fidelity at the smallest N.
    """
    n = _as_1d(n_values, "n_values")
    f = _as_1d(fidelities, "fidelities")
    if n.size != f.size:
        raise FitError("n_values and fidelities differ in length")
    if n.size < 3:
        raise FitError("gate-error fit needs at least 3 points")
    if np.any((f <= 0) | (f > 1)):
        raise FitError("fidelities must lie in (0, 1]")
    order = np.lexsort((f, n))
    n, f = n[order], f[order]

    slope = np.polyfit(n, np.log(f), 1)[0] if np.ptp(n) > 0 else 0.0
    eg0 = min(max(-math.expm1(slope), 0.0), 0.5)
    e00 = min(max(1.0 - f[0] / (1.0 - eg0) ** n[0], 0.0), 0.999)

    def residual(x):
        return gate_error_model(n, x[0], x[1]) - f

    def jacobian(x):
        e0, eg = x
        base = (1.0 - eg) ** n
        return np.column_stack([-base, -(1.0 - e0) * n * (1.0 - eg) ** (n - 1)])

    lower, upper = np.array([0.0, 0.0]), np.array([1.0 - 1e-12, 1.0 - 1e-12])
    x, jac, res, ok, it = levenberg_marquardt(residual, jacobian, [e00, eg0], lower, upper)
    free = np.array([True, True])
    se = _standard_errors(jac, res, free)
    return FitResult({"eps0": float(x[0]), "eps_gate": float(x[1])},
                     {"eps0": float(se[0]), "eps_gate": float(se[1])},
                     float(np.linalg.norm(res)), bool(ok), it)


# --- coherence envelope ---------------------------------------------------------

P_BOUNDS = (1.0, 4.0)


def envelope_model(t, t2: float, p: float, plateau: float = 1.0):
    """``plateau * exp(-(t/t2)^p)``."""
    return plateau * np.exp(-(np.asarray(t, dtype=float) / t2) ** p)


def fit_coherence_envelope(times, amplitudes, plateau: Optional[float] = None) -> FitResult:
    """Fit a stretched exponential ``plateau * exp(-(t/T2)^p)`` with ``p`` in [1, 4].

    ``plateau`` is the fidelity level that normalizes the envelope.  By default
    it is fitted along with ``T2`` and ``p``; pass a number to hold it fixed
    (e.g. 1 for amplitudes that are already normalized).  ``T2`` comes out in
    the units of ``times``.  Initial guess: plateau from the earliest points,
    ``T2`` from the 1/e crossing, ``p = 2``.
    """
    t = _as_1d(times, "times")
    y = _as_1d(amplitudes, "amplitudes")
    if t.size != y.size:
        raise FitError("times and amplitudes differ in length")
    if t.size < 4:
        raise FitError("envelope fit needs at least 4 points")
    if np.all(y == 0):
        raise FitError("all amplitudes are zero")
    if np.any((y < 0) | (y > 1.05)) or np.any(t < 0):
        raise FitError("amplitudes must lie in [0, 1.05] and times must be non-negative")
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]

    a0 = float(plateau) if plateau is not None else float(max(y[: max(1, t.size // 4)].max(), 1e-6))
    level = a0 / math.e
    below = np.nonzero(y < level)[0]
    if below.size and below[0] > 0:
        i = below[0]
        frac = (y[i - 1] - level) / (y[i - 1] - y[i])
        t2_0 = t[i - 1] + frac * (t[i] - t[i - 1])
    else:
        k = int(np.argmin(y))
        ratio = min(max(y[k] / a0, 1e-12), 1 - 1e-12)
        t2_0 = t[k] / math.sqrt(-math.log(ratio)) if t[k] > 0 else float(np.max(t))
    t2_0 = max(t2_0, 1e-12)

    fit_plateau = plateau is None

    def unpack(x):
        return x[0], x[1], (x[2] if fit_plateau else a0)

    def residual(x):
        t2, p, a = unpack(x)
        return envelope_model(t, t2, p, a) - y

    def jacobian(x):
        t2, p, a = unpack(x)
        ratio = t / t2
        u = ratio ** p
        e = np.exp(-u)
        logr = np.log(np.where(ratio > 0, ratio, 1.0))
        cols = [a * e * u * p / t2, -a * e * u * logr]
        if fit_plateau:
            cols.append(e)
        return np.column_stack(cols)

    x0 = [t2_0, 2.0] + ([a0] if fit_plateau else [])
    lower = [1e-12, P_BOUNDS[0]] + ([1e-12] if fit_plateau else [])
    upper = [np.inf, P_BOUNDS[1]] + ([1.1] if fit_plateau else [])
    x, jac, res, ok, it = levenberg_marquardt(residual, jacobian, x0, lower, upper)
    free = np.ones(len(x), dtype=bool)
    # a parameter pinned on its bound carries no curvature information
    free[1] = P_BOUNDS[0] < x[1] < P_BOUNDS[1]
    se = _standard_errors(jac, res, free)
    t2, p, a = unpack(x)
    params = {"t2": float(t2), "p": float(p), "plateau": float(a)}
    errors = {"t2": float(se[0]), "p": float(se[1]), "plateau": float(se[2]) if fit_plateau else 0.0}
    return FitResult(params, errors, float(np.linalg.norm(res)), bool(ok), it)


# --- relaxation budget ----------------------------------------------------------

def pure_coherence_time(t2: float, t1: float) -> float:
    """Pure dephasing time from ``1/T2 = 1/T2_pure + 1/T1`` (any consistent unit).

    Raises ``ValueError`` when ``t2 >= t1``: the observed coherence time of the
    geometric qubit cannot exceed ``T1``.
    """
    if not t1 > 0 or not t2 > 0:
        raise ValueError("t1 and t2 must be positive")
    if t2 >= t1 * (1.0 - 1e-9):
        raise ValueError(f"t2 = {t2} reaches t1 = {t1}: no finite pure coherence time")
    return 1.0 / (1.0 / t2 - 1.0 / t1)


def pure_coherence_time_with_error(t2: float, t1: float, t2_err: float = 0.0,
                                   t1_err: float = 0.0) -> tuple[float, float]:
    """:func:`pure_coherence_time` plus a first-order propagated standard error."""
    value = pure_coherence_time(t2, t1)
    d = (t1 - t2) ** 2
    return value, math.hypot(t1 ** 2 / d * t2_err, t2 ** 2 / d * t1_err)


def observed_coherence_time(t2_pure: float, t1: float) -> float:
    """Inverse of :func:`pure_coherence_time`."""
    return 1.0 / (1.0 / t2_pure + 1.0 / t1)


# --- power law -------------------------------------------------------------------

def fit_power_law(n_values, values, sigma=None) -> FitResult:
    """Fit ``values = prefactor * n^exponent`` by linear regression in log-log space.

    ``sigma`` (scalar or per point, same units as ``values``) turns the fit
    into weighted least squares with log-space errors ``sigma / values``;
    without it all points weigh the same, which suits relative noise.
    Standard errors are residual-scaled either way.
    """
    n = _as_1d(n_values, "n_values")
    v = _as_1d(values, "values")
    if n.size != v.size:
        raise FitError("inputs differ in length")
    if n.size < 3:
        raise FitError("power-law fit needs at least 3 points")
    if np.any(n <= 0) or np.any(v <= 0):
        raise FitError("power-law fit needs positive inputs")
    if sigma is None:
        w = np.ones_like(v)
    else:
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), v.shape)
        if np.any(~np.isfinite(sig)) or np.any(sig <= 0):
            raise FitError("sigma must be positive and finite")
        w = (v / sig) ** 2
    x, y = np.log(n), np.log(v)
    xm, ym = np.average(x, weights=w), np.average(y, weights=w)
    sxx = float(np.sum(w * (x - xm) ** 2))
    if sxx == 0:
        raise FitError("n_values must not all be equal")
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    res = y - (intercept + slope * x)
    s2 = float(np.sum(w * res ** 2)) / (n.size - 2)
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1.0 / w.sum() + xm ** 2 / sxx))
    prefactor = math.exp(intercept)
    return FitResult({"exponent": slope, "prefactor": prefactor},
                     {"exponent": se_slope, "prefactor": prefactor * se_int},
                     float(np.linalg.norm(res)), True, 0)


# --- resonance dips ---------------------------------------------------------------

def rolling_median(y, window: int) -> np.ndarray:
    return median_filter(np.asarray(y, dtype=float), size=window, mode="nearest")


def _default_window(n: int) -> int:
    w = max(5, n // 4)
    return w if w % 2 else w + 1


def _half_width(x, y, i: int, baseline: float) -> float:
    """Full width of the dip at ``i`` at half its depth below ``baseline``."""
    half = baseline - 0.5 * (baseline - y[i])
    left = i
    while left > 0 and y[left] < half:
        left -= 1
    right = i
    while right < len(y) - 1 and y[right] < half:
        right += 1
    if y[left] < half or y[right] < half:
        return float("nan")

    def cross(a, b):
        return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    return float(cross(right - 1, right) - cross(left, left + 1))


def find_dips(taus, fidelities, prominence: float = 0.05, window: Optional[int] = None) -> DipReport:
    """Locate resonance dips in a fidelity-versus-interval curve.

    A dip is the lowest point of a contiguous run of samples lying more than
    ``prominence`` below the rolling median (``window`` samples, default about
    a quarter of the scan); runs whose minimum sits on the scan edge are
    ignored.  The detuning estimate (kHz) is the reciprocal of the mean dip
    spacing (us) and needs at least two dips.
    """
    x = _as_1d(taus, "taus")
    y = _as_1d(fidelities, "fidelities")
    if x.size != y.size:
        raise FitError("taus and fidelities differ in length")
    if x.size < 5:
        raise FitError("dip search needs at least 5 points")
    if not np.all(np.diff(x) > 0):
        raise FitError("taus must be strictly increasing")
    base = rolling_median(y, window or _default_window(x.size))
    low = y < base - prominence
    positions, widths, depths = [], [], []
    i = 0
    while i < x.size:
        if not low[i]:
            i += 1
            continue
        j = i
        while j + 1 < x.size and low[j + 1]:
            j += 1
        k = i + int(np.argmin(y[i:j + 1]))
        if 0 < k < x.size - 1:
            positions.append(float(x[k]))
            widths.append(_half_width(x, y, k, float(base[k])))
            depths.append(float(base[k] - y[k]))
        i = j + 1
    if len(positions) < 2:
        return DipReport(positions, widths, depths)
    spacing = float(np.mean(np.diff(positions)))
    return DipReport(positions, widths, depths, spacing, 1e3 / spacing)


# --- resampling and plateau averaging -------------------------------------------

def bootstrap_standard_errors(fit: Callable, x, y, n_boot: int = 200, seed: int = 0) -> dict:
    """Residual-bootstrap standard errors for any ``fit(x, y) -> FitResult``.

    Residuals of the original fit are resampled with replacement onto its
    fitted curve ``n_boot`` times; the standard deviation of each refitted
    parameter is the error.  ``fit`` must be one of the fitters in this
    module or carry a ``predict(x, result)`` attribute.
    """
    x = _as_1d(x, "x")
    y = _as_1d(y, "y")
    base = fit(x, y)
    curve = _predict(fit, x, base)
    res = y - curve
    rng = np.random.default_rng(seed)
    draws = {name: [] for name in base.parameters}
    for _ in range(n_boot):
        y_star = curve + rng.choice(res, size=res.size, replace=True)
        try:
            r = fit(x, y_star)
        except FitError:
            continue
        for name in draws:
            draws[name].append(r.parameters[name])
    return {name: float(np.std(v, ddof=1)) if len(v) > 1 else float("nan") for name, v in draws.items()}


def _predict(fit: Callable, x: np.ndarray, result: FitResult) -> np.ndarray:
    p = result.parameters
    if fit is fit_gate_error:
        return gate_error_model(x, p["eps0"], p["eps_gate"])
    if fit is fit_coherence_envelope:
        return envelope_model(x, p["t2"], p["p"], p["plateau"])
    if fit is fit_power_law:
        return p["prefactor"] * x ** p["exponent"]
    predict = getattr(fit, "predict", None)
    if predict is None:
        raise TypeError("fit has no known model; give it a predict(x, result) attribute")
    return np.asarray(predict(x, result), dtype=float)


def plateau_fidelity(times, fidelities, window: Optional[tuple[float, float]] = None) -> tuple[float, float]:
    """Mean fidelity and its standard error over the non-decohered part of a decay.

    ``window = (start, stop)`` selects the points with ``start <= t <= stop``;
    by default the window runs from the first point up to the fitted 1/e
    time of the coherence envelope.
    """
    t = _as_1d(times, "times")
    f = _as_1d(fidelities, "fidelities")
    if t.size != f.size:
        raise FitError("times and fidelities differ in length")
    if window is None:
        window = (float(np.min(t)), fit_coherence_envelope(t, f)["t2"])
    lo, hi = window
    sel = f[(t >= lo) & (t <= hi)]
    if sel.size == 0:
        raise FitError(f"no points inside the plateau window [{lo}, {hi}]")
    err = float(np.std(sel, ddof=1) / math.sqrt(sel.size)) if sel.size > 1 else 0.0
    return float(np.mean(sel)), err
