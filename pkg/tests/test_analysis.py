"""Tests for analysis.py."""
import math

import numpy as np
import pytest
from nse_power_expansion.analysis import DecayFit, RemainderReport, RemainderRow, bilinear_ratio, \
    bilinear_ratios, d0, d1, decay_bound_report, estimate_bilinear_constant, fit_exponential_remainder, \
    fit_power_decay, heat_bound_check, integral_bound_probe, mx2_check, nonlinear_norms, probe_d0, \
    remainder_norms, remainder_params, remainder_report, running_sup, smallness_constants
from nse_power_expansion.exponents import ExponentSequence, generate_semigroup
from nse_power_expansion.expansion import SolutionExpansion
from nse_power_expansion.solver import ForceModel, SolverConfig, Trajectory, integrate
from nse_power_expansion.spectral import GevreyParams, SpectralField, bilinear_B, gevrey_norm, \
    random_solenoidal_field
from nse_power_expansion.util.errors import FitError, ValidationError


def synthetic_trajectory(times, terms, cutoff):
    """Get a trajectory u(t) = sum field t^{-mu} without integrating."""
    times = np.asarray(times, dtype=float)
    coeffs = np.zeros((len(times), SpectralField.zeros(cutoff).modes.size, 3), dtype=complex)
    for mu, field in terms:
        coeffs = coeffs + times[:, None, None] ** (-float(mu)) * field.at_cutoff(cutoff).coeffs[None]
    config = SolverConfig(cutoff, dt=0.1, t_end=float(times[-1]))
    return Trajectory(times, coeffs, config, ForceModel.zero(cutoff), SpectralField.zeros(cutoff))


def test_d0():
    """Test d0 and d1 closed forms."""
    assert d0(1, 1) == pytest.approx(1 / math.e)
    assert d0(2, 1) == pytest.approx((2 / math.e) ** 2)
    assert d1(1, 1) == pytest.approx(2 * (4 / math.e + 1))
    with pytest.raises(ValidationError) as e:
        d0(0, 1)
    assert str(e.value) == 'd0 needs positive arguments. (0, 1)'


@pytest.mark.parametrize('a', [0.5, 1, 2])
@pytest.mark.parametrize('s', [0.5, 1, 2])
def test_probe_d0(a, s):
    """Test d0 against numerical maximization."""
    assert probe_d0(a, s) == pytest.approx(d0(a, s), rel=1e-8)
    grid = np.linspace(1e-6, 20, 200001)
    assert np.max(grid ** a * np.exp(-s * grid)) <= d0(a, s) * (1 + 1e-12)


@pytest.mark.parametrize('a, s', [(0.5, 0.5), (1, 1), (2, 0.5), (3, 2)])
def test_mx2_check(a, s):
    """Test e^{-sx} <= d0(a, s) e^s (1+x)^{-a}."""
    holds, ratio = mx2_check(a, s, np.linspace(0, 100, 10001))
    assert holds
    assert 0 < ratio <= 1 + 1e-12


def test_heat_bound():
    """Test |A^a e^{-tau A} v| <= d0(a, tau) |v|."""
    v = random_solenoidal_field(1, 8)
    for a, tau in [(0.5, 0.1), (1.0, 0.5), (2.0, 1.0)]:
        holds, lhs, rhs = heat_bound_check(a, tau, v)
        assert holds and lhs <= rhs


def test_smallness_constants():
    """Test c_*, M_1 and M_2."""
    consts = smallness_constants('1/2', 1, 4.0)
    assert consts.c_star == pytest.approx(1 / 24)
    assert consts.m1 == pytest.approx(4 / math.e)
    assert consts.m2 == pytest.approx(d1(2, 1))
    assert consts.c0 == pytest.approx(consts.c_star / math.sqrt(4 / math.e))
    assert consts.c1 == pytest.approx(consts.c_star / math.sqrt(3 * d1(2, 1)))
    assert smallness_constants('1/2', 1, 4.0, sigma=0.5).t_star == 6.0
    assert consts.write()['K_hat'] == 4.0


@pytest.mark.parametrize('args, msg', [
    (('1/4', 1, 2.0), 'Alpha should be at least 1/2. (1/4)'),
    (('1/2', 0, 2.0), 'Lambda should be positive. (0)'),
    (('1/2', 1, 1.0), 'K_hat should exceed 1. (1.0)'),
])
def test_smallness_errors(args, msg):
    """Test smallness_constants validation."""
    with pytest.raises(ValidationError) as e:
        smallness_constants(*args)
    assert str(e.value) == msg


@pytest.mark.parametrize('lam', [1, 2])
@pytest.mark.parametrize('sigma', [0.5, 1])
def test_integral_bound(lam, sigma):
    """Test the convolution bound by adaptive quadrature."""
    rows = integral_bound_probe(lam, sigma, [0, 1, 10, 100])
    assert [row['t'] for row in rows] == [0, 1, 10, 100]
    assert all(row['holds'] for row in rows)
    assert rows[0]['integral'] == 0
    assert all(0 <= row['ratio'] <= 1 for row in rows)


def test_integral_bound_value():
    """Test one quadrature against elementary bounds."""
    rows = integral_bound_probe(1, 1, [2.0])
    # 1 <= 1+s <= 3 on [0, 2]
    assert math.exp(-2) * (math.e ** 2 - 1) / 3 <= rows[0]['integral'] <= (1 - math.exp(-2))


def test_bilinear_ratio():
    """Test the bilinear ratio for a shear pair and random pairs."""
    p = GevreyParams('1/2', 0)
    shear = SpectralField.from_modes(1, [((1, 0, 0), (0, 1.0, 0))])
    assert bilinear_ratio(shear, shear, p) == 0
    assert bilinear_ratio(SpectralField.zeros(2), shear, p) == 0
    assert estimate_bilinear_constant(0, 1, p, pairs=[(shear, shear)]) == 0

    u, v = random_solenoidal_field(1, 4), random_solenoidal_field(2, 4)
    half = p.shifted('1/2')
    expected = gevrey_norm(bilinear_B(u, v), p) / (gevrey_norm(u, half) * gevrey_norm(v, half))
    assert bilinear_ratio(u, v, p) == pytest.approx(expected)
    assert estimate_bilinear_constant(0, 4, p, pairs=[(u, v)]) == pytest.approx(expected ** 2)


def test_bilinear_ratios_reproducible():
    """Test that one seed gives one ratio stream."""
    p = GevreyParams('1/2', 0)
    r1 = bilinear_ratios(20, 4, p, seed=3)
    r2 = bilinear_ratios(40, 4, p, seed=3)
    np.testing.assert_array_equal(r1, r2[:20])
    assert np.all(r1 > 0) and np.all(np.isfinite(r1))
    with pytest.raises(ValidationError) as e:
        bilinear_ratios(0, 4, p)
    assert str(e.value) == 'Samples should be positive. (0)'


def test_bilinear_constant_stable():
    """Test that the running sup drifts less than 5% from 1000 to 2000 samples."""
    p = GevreyParams('1/2', 0)
    sup = running_sup(bilinear_ratios(2000, 8, p, seed=0))
    assert np.isfinite(sup[-1])
    assert (sup[-1] - sup[999]) / sup[999] < 0.05


def test_running_sup():
    """Test running_sup."""
    np.testing.assert_array_equal(running_sup([1, 3, 2, 5]), [1, 3, 3, 5])


def test_fit_power_decay():
    """Test power fits of synthetic data."""
    times = np.geomspace(1, 1000, 121)
    fit = fit_power_decay(times, times ** -2.0)
    assert fit.exponent == pytest.approx(2.0, abs=1e-10)
    assert fit.window == (times[times >= 100][0], 1000.0)
    assert not fit.non_power

    fit = fit_power_decay(times, 3 * times ** -2.0 + times ** -5.0, window=(10, 1000))
    assert fit.exponent == pytest.approx(2.0, abs=0.01)
    assert fit.stderr < 0.05


def test_fit_non_power():
    """Test that exponential decay is flagged."""
    times = np.geomspace(1, 30, 60)
    fit = fit_power_decay(times, np.exp(-times), window=(1, 30))
    assert fit.non_power
    assert fit.curvature > 0.1
    assert fit.write()['non_power']


def test_fit_errors():
    """Test fit failures."""
    times = np.geomspace(1, 1000, 121)
    with pytest.raises(FitError) as e:
        fit_power_decay(times, times ** -2.0, window=(1, 1.2))
    assert str(e.value) == 'Decay fit needs at least 8 points in the window. (4)'
    values = times ** -2.0
    values[-1] = 0
    with pytest.raises(FitError) as e:
        fit_power_decay(times, values)
    assert str(e.value) == 'Non-positive values in the fit window.'


@pytest.mark.parametrize('power, rate, beta, poly_bound', [
    (2.0, 1.0, 2.0, True),
    (0.0, 1.0, 0.0, True),
    (0.0, 0.5, None, False),
])
def test_fit_exponential(power, rate, beta, poly_bound):
    """Test fits of t^power e^{-rate t}."""
    times = np.arange(10, 30.001, 0.25)
    fit = fit_exponential_remainder(times, times ** power * np.exp(-rate * times), window=(10, 30))
    assert fit.poly_bound == poly_bound
    if beta is not None:
        b, stderr = fit
        assert b == pytest.approx(beta, abs=1e-8)
        assert stderr < 1e-8
        assert abs(fit.rate_excess) < 1e-8


def test_remainder_params():
    """Test (alpha + 1 - rho, sigma)."""
    assert remainder_params(GevreyParams('1/2', 0.1), '1/2') == GevreyParams(1, 0.1)
    assert remainder_params(GevreyParams('1/2', 0), '1/4') == GevreyParams('5/4', 0)
    with pytest.raises(ValidationError) as e:
        remainder_params(GevreyParams(), 1)
    assert str(e.value) == 'Rho should be in (0, 1). (1)'


def four_terms(cutoff=2):
    """Get xi_1..xi_4 with xi_4 kept out of the expansion."""
    return [random_solenoidal_field(10 + n, cutoff) * 0.1 for n in range(4)]


def test_remainder_norms():
    """Test remainders of a synthetic power series."""
    xis = four_terms()
    times = np.geomspace(1, 100, 41)
    traj = synthetic_trajectory(times, list(zip([1, 2, 3, 4], xis)), 2)
    sol = SolutionExpansion(ExponentSequence.integers(3), xis[:3])
    p = GevreyParams('1/2', 0)
    values = remainder_norms(traj, sol, 3, p)
    expected = [gevrey_norm(xis[3] * t ** -4.0, GevreyParams(1, 0)) for t in times]
    np.testing.assert_allclose(values, expected, rtol=1e-6)

    with pytest.raises(ValidationError) as e:
        remainder_norms(traj, sol.at_cutoff(4), 1, p)
    assert str(e.value) == 'Trajectory and expansion cutoffs differ. (2 != 4)'


def test_remainder_report():
    """Test predicted exponents, pass flags and monotonicity."""
    xis = four_terms()
    times = np.geomspace(1, 1000, 121)
    traj = synthetic_trajectory(times, list(zip([1, 2, 3, 4], xis)), 2)
    sol = SolutionExpansion(ExponentSequence.integers(3), xis[:3])
    report = remainder_report(traj, sol, [0, 1, 2, 3], GevreyParams('1/2', 0), window=(10, 300),
                              experiment='synthetic')
    assert [str(row.predicted) for row in report.rows] == ['1', '2', '3', '4']
    for row in report.rows:
        assert row.fit.exponent == pytest.approx(row.N + 1, abs=0.2)
    assert report.passed
    assert report.monotone()
    obj = report.write()
    assert obj['experiment'] == 'synthetic' and obj['monotone']
    assert set(obj['fits'][0]) == {'N', 'alpha_eff', 'sigma', 'rho', 'exponent', 'stderr', 'window', 'n_points',
                                   'predicted', 'predicted_finite', 'margin', 'pass', 'flags'}
    assert obj['fits'][0]['alpha_eff'] == '1'


def test_remainder_report_fractional():
    """Test predictions for gammas 1 and 3/2 and the finite-expansion column."""
    seq = generate_semigroup(['1', '3/2'], 2)
    xis = four_terms()
    times = np.geomspace(1, 1000, 121)
    traj = synthetic_trajectory(times, [(1, xis[0]), (1.5, xis[1]), (2, xis[2]), (2.5, xis[3])], 2)
    sol = SolutionExpansion(seq, xis[:3])
    report = remainder_report(traj, sol, [2, 3], GevreyParams('1/2', 0), window=(10, 1000),
                              finite=(3, seq.mu(3) - seq.mu(2)))
    assert [str(row.predicted) for row in report.rows] == ['2', '5/2']
    assert report.rows[0].predicted_finite is None
    assert str(report.rows[1].predicted_finite) == '5/2'
    assert report.rows[1].fit.exponent == pytest.approx(2.5, abs=0.05)


def test_remainder_floor_limited():
    """Test that an exact partial sum gives floor-limited passing rows."""
    xi = random_solenoidal_field(7, 2) * 0.1
    times = np.geomspace(1, 1000, 121)
    traj = synthetic_trajectory(times, [(1, xi)], 2)
    sol = SolutionExpansion(ExponentSequence.integers(3), [xi, SpectralField.zeros(2), SpectralField.zeros(2)])
    report = remainder_report(traj, sol, [0, 1, 2], GevreyParams('1/2', 0))
    first, second, third = report.rows
    assert first.fit.exponent == pytest.approx(1.0, abs=1e-8)
    for row in [second, third]:
        assert row.fit is None
        assert row.flags == ['window-shrunk', 'floor-limited']
        assert row.passed
        assert row.write()['exponent'] is None
    assert report.passed and report.monotone()


def from_time_zero(xi, scale, times):
    """Get u(t) = scale xi / t recorded from t = 0, with u(0) = scale xi."""
    later = synthetic_trajectory(times[1:], [(1, xi * scale)], xi.cutoff)
    coeffs = np.concatenate([(xi * scale).coeffs[None], later.coeffs])
    return Trajectory(times, coeffs, later.config, later.force, later.u0)


def test_remainder_from_time_zero():
    """Test that samples at t = 0 are dropped from the fit instead of passing as floor-limited."""
    xi = random_solenoidal_field(7, 2) * 0.1
    times = np.arange(0, 30.25, 0.25)
    traj = from_time_zero(xi, 3, times)
    sol = SolutionExpansion(ExponentSequence.integers(3), [xi, SpectralField.zeros(2), SpectralField.zeros(2)])
    p = GevreyParams('1/2', 0)
    values = remainder_norms(traj, sol, 1, p)
    assert np.isnan(values[0])
    assert np.all(np.isfinite(values[1:]))

    for window in [(0, 30), (5, 30)]:
        row = remainder_report(traj, sol, [1], p, window=window).rows[0]
        assert 'floor-limited' not in row.flags
        assert row.fit.exponent == pytest.approx(1.0, abs=1e-6)
        assert not row.passed
    row = remainder_report(traj, sol, [1], p, window=(0, 30)).rows[0]
    assert row.flags[0] == 'invalid-dropped'
    assert row.fit.n_points == len(times) - 1


def test_remainder_too_few_points():
    """Test that a short window above the floor fails."""
    xi = random_solenoidal_field(7, 2) * 0.1
    traj = from_time_zero(xi, 3, np.arange(0, 30.25, 0.25))
    sol = SolutionExpansion(ExponentSequence.integers(3), [xi, SpectralField.zeros(2), SpectralField.zeros(2)])
    report = remainder_report(traj, sol, [1], GevreyParams('1/2', 0), window=(0, 1))
    row = report.rows[0]
    assert row.fit is None
    assert row.flags == ['invalid-dropped', 'too-few-points']
    assert not row.passed and not report.passed

    single = from_time_zero(xi, 3, np.array([0.0, 1.0]))
    single = Trajectory(single.times[:1], single.coeffs[:1], single.config, single.force, single.u0)
    with pytest.raises(FitError) as e:
        remainder_report(single, sol, [1], GevreyParams('1/2', 0))
    assert str(e.value) == 'No finite sample at positive time.'


@pytest.mark.parametrize('exponent, stderr, non_power, passed', [
    (1.85, 0.01, False, True),
    (1.7, 0.01, False, False),
    (2.5, 0.06, False, False),
    (1.9, 0.01, True, True),
])
def test_row_pass_rule(exponent, stderr, non_power, passed):
    """Test exponent >= predicted - 0.2 with stderr < 0.05."""
    fit = DecayFit(exponent, stderr, (10, 100), 20, 0.0, non_power)
    row = RemainderRow(1, GevreyParams(1, 0), 0.5, None, fit, 2, None, [])
    assert row.passed == passed
    assert row.margin == pytest.approx(exponent - 2)


def test_monotone():
    """Test that a slower fit after a faster one breaks monotonicity."""
    rows = [RemainderRow(n, GevreyParams(1, 0), 0.5, None, DecayFit(e, 0.01, (10, 100), 20, 0.0, False), n + 1,
                         None, []) for n, e in enumerate([1.0, 2.0, 1.7])]
    assert not RemainderReport('x', rows).monotone()
    assert RemainderReport('x', rows).monotone(tolerance=0.5)


def test_nonlinear_norms():
    """Test |B(u, u)| along a trajectory."""
    u = random_solenoidal_field(8, 2) * 0.1
    traj = synthetic_trajectory([1.0, 2.0], [(1, u)], 2)
    p = GevreyParams('1/2', 0)
    values = nonlinear_norms(traj, p)
    assert values[0] == pytest.approx(gevrey_norm(bilinear_B(u, u), GevreyParams('1/2', 0)))
    assert values[1] == pytest.approx(values[0] / 4)
    shear = SpectralField.from_modes(1, [((1, 0, 0), (0, 1.0, 0))])
    assert not np.any(nonlinear_norms(synthetic_trajectory([1.0, 2.0], [(1, shear)], 1), p))


def test_decay_bound_report():
    """Test the small-data hypotheses and bounds on an unforced run."""
    consts = smallness_constants('1/2', 1, 2.0)
    p = GevreyParams('1/2', 0)
    config = SolverConfig(2, dt=0.05, t_end=10.0, record={'kind': 'uniform', 'step': 0.1})
    small = integrate(config, random_solenoidal_field(2, 2) * 1e-3, ForceModel.zero(2))
    report = decay_bound_report(small, ForceModel.zero(2), p, 1, consts)
    assert report['hypotheses_hold'] and report['bounds_hold']
    assert report['u0_ratio'] < 1 and report['force_ratio'] == 0
    assert report['decay_ratio'] < 1 and report['integral_ratio'] < 1

    large = Trajectory(small.times, small.coeffs, config, ForceModel.zero(2), random_solenoidal_field(2, 2))
    assert not decay_bound_report(large, ForceModel.zero(2), p, 1, consts)['hypotheses_hold']
