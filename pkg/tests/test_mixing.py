"""Correlation estimation, rate fitting, variance bound, Chebyshev step."""
import math

import numpy as np
import pytest

from horolab import lattice as lat, mixing as mix, observables as obs
from horolab.errors import BoundViolation, InsufficientSignal, RangeError
from horolab.rng import Stream


@pytest.fixture(scope="module")
def fz():
    return obs.normalize_zero_mean(obs.get_preset("horizontal"), 10**5, Stream(201, 0))


def _synthetic(values, ts, stderr=0.0, n=10**4):
    return [mix.CorrelationEstimate(float(t), float(v), stderr, n) for t, v in zip(ts, values)]


# ---------------------------------------------------------------------------
# estimate_correlation
# ---------------------------------------------------------------------------

def test_correlation_at_zero_is_l2_norm(fz):
    est = mix.estimate_correlation(fz, [0.0], 10**4, Stream(203, 0))[0]
    assert est.value >= 0.0
    x, y, th = lat.sample_haar_coords(Stream(203, 0).generator, 10**4)
    direct = float(np.mean(obs.evaluate_coords(fz, x, y, th) ** 2))
    assert est.value == pytest.approx(direct, rel=1e-12)


def test_correlation_decays_to_noise(fz):
    est = mix.estimate_correlation(fz, [64.0, 128.0], 2 * 10**4, Stream(207, 0))
    for e in est:
        assert abs(e.value) <= 3.0 * e.stderr


def test_correlation_bounded_by_sup_squared(fz):
    est = mix.estimate_correlation(fz, [0.0, 1.0, 3.0], 10**4, Stream(209, 0))
    for e in est:
        assert abs(e.value) <= fz.sup_norm**2


def test_correlation_common_random_numbers(fz):
    a = mix.estimate_correlation(fz, [2.0, 4.0], 10**4, Stream(211, 0))
    b = mix.estimate_correlation(fz, [2.0, 4.0], 10**4, Stream(211, 0))
    assert all(x.value == y.value for x, y in zip(a, b))


def test_correlation_stderr_clt(fz):
    small = mix.estimate_correlation(fz, [2.0], 10**4, Stream(213, 0))[0]
    big = mix.estimate_correlation(fz, [2.0], 4 * 10**4, Stream(215, 0))[0]
    assert small.stderr / big.stderr == pytest.approx(2.0, rel=0.2)


def test_correlation_time_reversal_symmetry(fz):
    # <f, f o u_t> against the reversed estimator built from u_{-t}
    n = 4 * 10**4
    t = 2.5
    x, y, th = lat.sample_haar_coords(Stream(217, 0).generator, n)
    mats = lat.coords_to_matrices(x, y, th)
    f0 = obs.evaluate_coords(fz, x, y, th)
    fwd = f0 * obs.evaluate_matrices(fz, lat.horocycle_matrices(mats, t))
    rev = f0 * obs.evaluate_matrices(fz, lat.horocycle_matrices(mats, -t))
    se = fwd.std() / math.sqrt(n) + rev.std() / math.sqrt(n)
    assert abs(fwd.mean() - rev.mean()) <= 3.0 * se


def test_correlation_preconditions(fz):
    with pytest.raises(ValueError):
        mix.estimate_correlation(fz, [1.0], 100, Stream(1, 0))
    raw = obs.get_preset("bulk")
    with pytest.raises(ValueError):
        mix.estimate_correlation(raw, [1.0], 10**4, Stream(1, 0))


# ---------------------------------------------------------------------------
# fit_rate
# ---------------------------------------------------------------------------

def test_fit_recovers_pure_power_law():
    ts = np.linspace(2.0, 100.0, 30)
    fit = mix.fit_rate(_synthetic(ts**-0.7, ts))
    assert fit.gamma_hat == pytest.approx(0.7, abs=0.01)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_recovers_scaled_power_law():
    ts = np.linspace(2.0, 100.0, 30)
    fit = mix.fit_rate(_synthetic(5.0 * ts**-0.3, ts))
    assert fit.gamma_hat == pytest.approx(0.3, abs=0.01)
    assert fit.C_hat == pytest.approx(5.0, rel=0.02)


def test_fit_constant_series():
    ts = np.linspace(2.0, 100.0, 20)
    fit = mix.fit_rate(_synthetic(np.full_like(ts, 0.4), ts, stderr=0.001))
    assert fit.gamma_hat == pytest.approx(0.0, abs=1e-9)


def test_fit_insufficient_signal():
    ts = np.linspace(2.0, 100.0, 20)
    noise = _synthetic(np.full_like(ts, 1e-6), ts, stderr=1e-3)
    with pytest.raises(InsufficientSignal):
        mix.fit_rate(noise)


def test_fit_noise_robust_with_errors():
    gen = Stream(219, 0).generator
    ts = np.geomspace(2.0, 60.0, 14)
    vals = 2.0 * ts**-0.5 * np.exp(gen.normal(0, 0.02, ts.size))
    fit = mix.fit_rate(_synthetic(vals, ts, stderr=1e-4))
    assert fit.gamma_hat == pytest.approx(0.5, abs=0.05)
    assert fit.se_gamma < 0.05


# ---------------------------------------------------------------------------
# majorant rate
# ---------------------------------------------------------------------------

def test_majorant_passthrough_when_slow():
    ts = np.linspace(2.0, 100.0, 10)
    est = _synthetic(ts**-0.5, ts)
    fit = mix.fit_rate(est)
    assert mix.majorant_rate(est, fit) is fit


def test_majorant_caps_fast_rates_and_majorizes():
    ts = np.geomspace(1.0, 30.0, 12)
    est = _synthetic(0.01 * ts**-2.0, ts, stderr=1e-5)
    fit = mix.fit_rate(est)
    assert fit.gamma_hat > 1.0
    maj = mix.majorant_rate(est, fit, gamma_cap=0.9)
    assert maj.gamma_hat == 0.9
    for e in est:
        assert abs(e.value) + 3 * e.stderr <= maj.C_hat * e.t**-0.9 * (1 + 1e-12)


# ---------------------------------------------------------------------------
# estimate_variance / check_variance_bound
# ---------------------------------------------------------------------------

def test_variance_zero_function():
    f0 = obs.bump((0.0, 1.5, 0.5), (0.2, 0.2, 0.5), amplitude=0.0)
    var = mix.estimate_variance(f0, [5.0], 256, 0.05, Stream(221, 0))
    assert var.variance[0] == 0.0


def test_variance_small_T_is_l2_norm(fz):
    var = mix.estimate_variance(fz, [0.05], 2048, 0.004, Stream(223, 0))
    x, y, th = lat.sample_haar_coords(Stream(223, 0).generator, 2048)
    l2 = float(np.mean(obs.evaluate_coords(fz, x, y, th) ** 2))
    assert var.variance[0] == pytest.approx(l2, rel=0.05)


def test_variance_decreasing_trend(fz):
    var = mix.estimate_variance(fz, [10.0, 100.0, 1000.0], 512, 0.25, Stream(227, 0))
    for i in range(2):
        assert var.variance[i + 1] <= var.variance[i] + 3.0 * (var.stderr[i] + var.stderr[i + 1])


def test_bound_constant_value():
    assert mix.variance_bound_constant(1.0, 1.0, 0.5) == pytest.approx(14.0 / 3.0, abs=1e-12)
    with pytest.raises(RangeError):
        mix.variance_bound_constant(1.0, 1.0, 1.0)
    with pytest.raises(RangeError):
        mix.variance_bound_constant(1.0, 1.0, -0.1)


def test_check_variance_bound_synthetic_exact_decay():
    fit = mix.RateFit(gamma_hat=0.5, C_hat=1.0, r_squared=1.0, t_range=(2.0, 100.0))
    T_grid = (10.0, 50.0, 250.0)
    var = mix.VarianceCheck(
        T_grid=T_grid,
        variance=tuple(t**-0.5 for t in T_grid),
        stderr=(0.0, 0.0, 0.0),
        n=10**4,
        sup_norm=1.0,
        quad_error_bounds=(0.0, 0.0, 0.0),
    )
    rows = mix.check_variance_bound(fit, var)
    for r in rows:
        assert r.ok and r.slack > 0
        assert r.bound == pytest.approx((14.0 / 3.0) * r.T**-0.5)


def test_check_variance_bound_violation_detected():
    fit = mix.RateFit(gamma_hat=0.5, C_hat=0.01, r_squared=1.0, t_range=(2.0, 100.0))
    var = mix.VarianceCheck(
        T_grid=(10.0,), variance=(5.0,), stderr=(0.0,), n=100,
        sup_norm=0.1, quad_error_bounds=(0.0,),
    )
    with pytest.raises(BoundViolation):
        mix.check_variance_bound(fit, var)


def test_variance_bound_on_real_flow_data(fz):
    est = mix.estimate_correlation(fz, np.geomspace(1.0, 8.0, 10), 10**4, Stream(229, 0))
    fit = mix.fit_rate(est)
    usable = mix.majorant_rate(est, fit, gamma_cap=0.9)
    var = mix.estimate_variance(fz, [10.0, 50.0], 512, 0.05, Stream(231, 0))
    rows = mix.check_variance_bound(usable, var)
    assert all(r.ok for r in rows)


# ---------------------------------------------------------------------------
# Chebyshev step
# ---------------------------------------------------------------------------

def test_chebyshev_no_hard_violations(fz):
    rows = mix.chebyshev_report(fz, 0.4, 0.35, [3, 6, 9], 1024, 0.05, Stream(233, 0))
    for r in rows:
        assert r.ok
        assert r.mass <= r.bound + 1e-12  # same-sample Markov holds exactly


def test_chebyshev_masses_shrink_with_m(fz):
    rows = mix.chebyshev_report(fz, 0.4, 0.2, [2, 10], 1024, 0.05, Stream(237, 0))
    assert rows[-1].mass <= rows[0].mass + 0.05
