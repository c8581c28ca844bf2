import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geodd.analysis import (
    FitError,
    bootstrap_standard_errors,
    envelope_model,
    find_dips,
    fit_coherence_envelope,
    fit_gate_error,
    fit_power_law,
    gate_error_model,
    levenberg_marquardt,
    observed_coherence_time,
    plateau_fidelity,
    pure_coherence_time,
    pure_coherence_time_with_error,
)

GATE_N = np.array([1, 2, 4, 8, 16, 32, 64, 128], dtype=float)
ENV_T = np.linspace(0.1, 4.0, 12)


# --- solver ---------------------------------------------------------------------------

def test_lm_respects_bounds():
    x, _, _, ok, _ = levenberg_marquardt(lambda x: x - 5.0, lambda x: np.eye(1), [0.0], [-1.0], [2.0])
    assert ok and x[0] == 2.0


def test_lm_solves_linear_problem():
    a = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])
    b = np.array([1.0, 2.0, 4.0])
    x, *_ = levenberg_marquardt(lambda x: a @ x - b, lambda x: a, [0, 0], [-10, -10], [10, 10])
    np.testing.assert_allclose(x, np.linalg.lstsq(a, b, rcond=None)[0], rtol=1e-9)


# --- gate error -----------------------------------------------------------------------

def test_gate_error_recovers_reference_generator():
    res = fit_gate_error(GATE_N, 0.898 * 0.9997 ** GATE_N)
    assert res["eps0"] == pytest.approx(0.102, rel=1e-6)
    assert res["eps_gate"] == pytest.approx(0.0003, rel=1e-6)
    assert res.converged


def test_gate_error_flat_data():
    res = fit_gate_error(GATE_N, np.full(GATE_N.size, 0.9))
    assert res["eps_gate"] == 0.0
    assert res["eps0"] == pytest.approx(0.1, abs=1e-12)


def test_gate_error_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(50):
        e0, eg = rng.uniform(0.0, 0.3), rng.uniform(1e-5, 1e-2)
        res = fit_gate_error(GATE_N, gate_error_model(GATE_N, e0, eg))
        assert res["eps0"] == pytest.approx(e0, rel=1e-6, abs=1e-12)
        assert res["eps_gate"] == pytest.approx(eg, rel=1e-6)


@given(st.permutations(range(8)))
def test_gate_error_order_invariant(perm):
    f = gate_error_model(GATE_N, 0.05, 0.002) + 0.003 * np.sin(np.arange(8))
    ref = fit_gate_error(GATE_N, f)
    res = fit_gate_error(GATE_N[list(perm)], f[list(perm)])
    assert res.parameters == ref.parameters


def test_gate_error_noise_calibration():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        f = gate_error_model(GATE_N, 0.102, 0.0003) + rng.normal(0, 0.005, GATE_N.size)
        res = fit_gate_error(GATE_N, f)
        hits += abs(res["eps_gate"] - 0.0003) < 3 * res.standard_errors["eps_gate"]
    assert hits >= 95


@pytest.mark.parametrize("n, f", [([1, 2], [0.9, 0.8]), ([1, 2, 3], [0.9, 1.2, 0.8]), ([1, 2], [0.9])])
def test_gate_error_bad_input(n, f):
    with pytest.raises(FitError):
        fit_gate_error(n, f)


# --- envelope -------------------------------------------------------------------------

def test_envelope_recovers_gaussian_decay():
    res = fit_coherence_envelope(ENV_T, np.exp(-(ENV_T / 1.9) ** 2))
    assert res["t2"] == pytest.approx(1.9, rel=1e-6)
    assert res["p"] == pytest.approx(2.0, rel=1e-6)
    assert res["plateau"] == pytest.approx(1.0, rel=1e-6)


def test_envelope_pure_exponential_hits_lower_bound():
    res = fit_coherence_envelope(ENV_T, np.exp(-ENV_T / 1.9), plateau=1.0)
    assert res["p"] == pytest.approx(1.0, abs=1e-3)


def test_envelope_random_draws():
    rng = np.random.default_rng(12)
    for _ in range(50):
        t2, p, a = rng.uniform(0.5, 3.0), rng.uniform(1.0, 4.0), rng.uniform(0.6, 1.0)
        t = np.linspace(0.05, 3 * t2, 16)
        res = fit_coherence_envelope(t, envelope_model(t, t2, p, a))
        assert res["t2"] == pytest.approx(t2, rel=1e-6)
        assert res["p"] == pytest.approx(p, rel=1e-6)
        assert res["plateau"] == pytest.approx(a, rel=1e-6)


def test_envelope_fixed_plateau_reports_it():
    res = fit_coherence_envelope(ENV_T, 0.8 * np.exp(-(ENV_T / 1.9) ** 3), plateau=0.8)
    assert res["plateau"] == 0.8 and res.standard_errors["plateau"] == 0.0
    assert res["p"] == pytest.approx(3.0, rel=1e-6)


def test_envelope_errors():
    with pytest.raises(FitError):
        fit_coherence_envelope(ENV_T, np.zeros(ENV_T.size))
    with pytest.raises(FitError):
        fit_coherence_envelope([0.1, 0.2, 0.3], [0.9, 0.8, 0.7])


def test_fit_result_invariants():
    rng = np.random.default_rng(3)
    res = fit_coherence_envelope(ENV_T, np.clip(np.exp(-(ENV_T / 1.9) ** 2) + rng.normal(0, 0.01, 12), 0, 1))
    assert all(v >= 0 for v in res.standard_errors.values()) and res.residual_norm >= 0


# --- T1 budget ------------------------------------------------------------------------

def test_pure_coherence_reference_value():
    assert round(pure_coherence_time(1.9, 2.6), 2) == 7.06


def test_pure_coherence_equal_split():
    assert pure_coherence_time(1.3, 2.6) == pytest.approx(2.6, rel=1e-15)


@pytest.mark.parametrize("t2", [2.6, 2.6 * (1 - 1e-10), 3.0])
def test_pure_coherence_pole(t2):
    with pytest.raises(ValueError):
        pure_coherence_time(t2, 2.6)


@given(st.floats(0.01, 100), st.floats(0.01, 0.99))
def test_pure_coherence_inverse(t1, frac):
    t2 = frac * t1
    assert observed_coherence_time(pure_coherence_time(t2, t1), t1) == pytest.approx(t2, rel=1e-12)


def test_pure_coherence_error_propagation():
    value, err = pure_coherence_time_with_error(1.9, 2.6, 0.01)
    h = 1e-6
    deriv = (pure_coherence_time(1.9 + h, 2.6) - pure_coherence_time(1.9 - h, 2.6)) / (2 * h)
    assert err == pytest.approx(abs(deriv) * 0.01, rel=1e-6)
    assert value == pure_coherence_time(1.9, 2.6)


# --- power law ------------------------------------------------------------------------

def test_power_law_linear():
    n = np.array([1, 2, 4, 8, 16.0])
    assert fit_power_law(n, 0.3 * n)["exponent"] == pytest.approx(1.0, abs=1e-9)


def test_power_law_two_thirds():
    n = np.array([1, 2, 4, 8, 16.0])
    res = fit_power_law(n, 0.3 * n ** (2 / 3))
    assert res["exponent"] == pytest.approx(2 / 3, abs=1e-6)
    assert res["prefactor"] == pytest.approx(0.3, rel=1e-9)


def test_power_law_random_draws():
    rng = np.random.default_rng(13)
    n = np.array([1, 2, 4, 8, 16, 32.0])
    for _ in range(50):
        k, c = rng.uniform(-1, 2), rng.uniform(0.01, 10)
        res = fit_power_law(n, c * n ** k)
        assert res["exponent"] == pytest.approx(k, rel=1e-6, abs=1e-12)
        assert res["prefactor"] == pytest.approx(c, rel=1e-6)


@pytest.mark.parametrize("n, v", [([0, 1, 2], [1, 2, 3]), ([1, 2, 3], [1, -2, 3]), ([2, 2, 2], [1, 2, 3])])
def test_power_law_bad_input(n, v):
    with pytest.raises(FitError):
        fit_power_law(n, v)


# --- dips -----------------------------------------------------------------------------

def synthetic_scan(centers, width=0.4, depth=0.3, step=0.05):
    taus = np.arange(0.5, 30.0, step)
    f = np.ones_like(taus)
    for c in centers:
        f -= depth * np.exp(-0.5 * ((taus - c) / width) ** 2)
    return taus, f


def test_dips_estimate_detuning():
    taus, f = synthetic_scan([7.69, 15.38])
    rep = find_dips(taus, f)
    assert len(rep.dip_positions) == 2
    assert rep.estimated_detuning == pytest.approx(130.0, rel=0.02)
    assert rep.estimated_detuning == pytest.approx(1e3 / rep.mean_spacing)


def test_dips_monotone_curve_is_empty():
    taus = np.linspace(0.5, 30, 300)
    rep = find_dips(taus, 1 - 0.01 * taus)
    assert rep.dip_positions == [] and rep.estimated_detuning is None


def test_single_dip_has_no_detuning():
    taus, f = synthetic_scan([7.69])
    rep = find_dips(taus, f)
    assert rep.dip_positions == [pytest.approx(7.69, abs=0.05)] and rep.estimated_detuning is None


def test_dip_width_is_full_width_at_half_depth():
    taus, f = synthetic_scan([10.0], width=0.5, step=0.01)
    rep = find_dips(taus, f)
    assert rep.widths[0] == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 0.5, rel=0.02)


@given(st.lists(st.floats(3.0, 27.0), min_size=1, max_size=4))
def test_dip_positions_increasing(centers):
    taus, f = synthetic_scan(sorted(centers), width=0.3)
    rep = find_dips(taus, f)
    assert all(b > a for a, b in zip(rep.dip_positions, rep.dip_positions[1:]))


def test_dips_bad_input():
    with pytest.raises(FitError):
        find_dips([3, 2, 1, 4, 5], [1, 1, 1, 1, 1])


# --- resampling and plateau -----------------------------------------------------------

def test_bootstrap_close_to_covariance_errors():
    rng = np.random.default_rng(5)
    f = gate_error_model(GATE_N, 0.102, 0.0003) + rng.normal(0, 0.005, GATE_N.size)
    cov = fit_gate_error(GATE_N, f).standard_errors
    boot = bootstrap_standard_errors(fit_gate_error, GATE_N, f, n_boot=300, seed=1)
    for name in cov:
        assert boot[name] == pytest.approx(cov[name], rel=0.5)


def test_bootstrap_deterministic():
    f = gate_error_model(GATE_N, 0.1, 0.001) + 0.002 * np.cos(GATE_N)
    a = bootstrap_standard_errors(fit_gate_error, GATE_N, f, n_boot=20, seed=3)
    b = bootstrap_standard_errors(fit_gate_error, GATE_N, f, n_boot=20, seed=3)
    assert a == b


def test_plateau_default_window_stops_at_t2():
    t = np.linspace(0.1, 4, 40)
    y = 0.9 * np.exp(-(t / 1.9) ** 4)
    mean, _ = plateau_fidelity(t, y)
    assert mean == pytest.approx(np.mean(y[t <= 1.9]), rel=1e-6)


def test_plateau_explicit_window():
    t = np.linspace(0, 1, 11)
    assert plateau_fidelity(t, t, window=(0.2, 0.4))[0] == pytest.approx(0.3)
    with pytest.raises(FitError):
        plateau_fidelity(t, t, window=(2, 3))
