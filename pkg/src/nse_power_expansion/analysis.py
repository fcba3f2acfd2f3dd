"""Measurements on trajectories and expansions.

Notes:
    Remainder norms |u(t) - sum_{n<=N} xi_n t^{-mu_n}| are fitted with power laws.
    The small-data constants and the elementary inequalities are evaluated and probed here.
"""
import math

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, stats

from .exponents import next_exponent
from .spectral import GevreyParams, bilinear_B, bilinear_coeffs, get_modes, gevrey_norm, heat_multiplier, \
    random_solenoidal_field, to_fraction
from .util.errors import FitError, ValidationError, validate

FLOOR = 1e-13
PASS_MARGIN = 0.2
MAX_STDERR = 0.05
MIN_POINTS = 8
CURVATURE_LIMIT = 0.1
RATE_TOLERANCE = 0.05


def d0(a, s):
    """Get max_{x>=0} x^a e^{-s x} = (a/(e s))^a."""
    validate(a > 0 and s > 0, f'd0 needs positive arguments. ({a}, {s})')
    return (a / (math.e * s)) ** a


def d1(lam, s):
    """Get 2^lam (d0(lam+1, s) e^s + 1/s)."""
    validate(lam > 0 and s > 0, f'd1 needs positive arguments. ({lam}, {s})')
    return 2.0 ** lam * (d0(lam + 1, s) * math.exp(s) + 1.0 / s)


def probe_d0(a, s):
    """Maximize x^a e^{-s x} numerically."""
    validate(a > 0 and s > 0, f'd0 needs positive arguments. ({a}, {s})')

    def neg_log(x):
        return -(a * math.log(x) - s * x)

    res = optimize.minimize_scalar(neg_log, bounds=(1e-12, 10.0 * (a + 1) / s), method='bounded',
                                   options={'xatol': 1e-12})
    return math.exp(-res.fun)


def mx2_check(a, s, xs):
    """Check e^{-s x} <= d0(a, s) e^s (1+x)^{-a} on a grid.

    Returns:
        holds (bool): the inequality holds at every grid point
        ratio (float): max of left side / right side
    """
    xs = np.asarray(xs, dtype=float)
    lhs = np.exp(-s * xs)
    rhs = d0(a, s) * math.exp(s) * (1.0 + xs) ** (-a)
    ratio = float(np.max(lhs / rhs))
    return ratio <= 1 + 1e-12, ratio


def heat_bound_check(a, tau, v):
    """Check |A^a e^{-tau A} v| <= d0(a, tau) |v|."""
    p = GevreyParams(0, 0)
    lhs = gevrey_norm(heat_multiplier(v, a, tau), p)
    rhs = d0(a, tau) * gevrey_norm(v, p)
    return lhs <= rhs * (1 + 1e-12), lhs, rhs


class SmallnessConstants:
    """Constants of the small-data decay theorem."""

    def __init__(self, alpha, lam, k_hat, sigma=0.0):
        """Constructor."""
        self.alpha = to_fraction(alpha)
        self.lam = float(lam)
        self.k_hat = float(k_hat)
        self.sigma = float(sigma)
        self.c_star = 1.0 / (12.0 * self.k_hat ** float(self.alpha))
        self.m1 = d0(2 * self.lam, 1) * math.e
        self.m2 = d1(2 * self.lam, 1)
        self.c0 = self.c_star / max(1.0, math.sqrt(self.m1))
        self.c1 = self.c_star / math.sqrt(3 * self.m2)
        self.t_star = 12.0 * self.sigma

    def write(self):
        """Get a json object."""
        return {'alpha': str(self.alpha), 'lambda': self.lam, 'sigma': self.sigma, 'K_hat': self.k_hat,
                'c_star': self.c_star, 'c0': self.c0, 'c1': self.c1, 'M1': self.m1, 'M2': self.m2,
                't_star': self.t_star}

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'K_hat: {self.k_hat} (alpha {self.alpha}, lambda {self.lam}, sigma {self.sigma})')
        print(pad + f'c_*: {self.c_star:.6e}, c_0: {self.c0:.6e}, c_1: {self.c1:.6e}')
        print(pad + f'M_1: {self.m1:.6e}, M_2: {self.m2:.6e}, t_*: {self.t_star}')


def smallness_constants(alpha, lam, k_hat, sigma=0.0):
    """Evaluate c_*, c_0, c_1, M_1, M_2 and t_*."""
    validate(to_fraction(alpha) >= to_fraction('1/2'), f'Alpha should be at least 1/2. ({alpha})')
    validate(lam > 0, f'Lambda should be positive. ({lam})')
    validate(k_hat > 1, f'K_hat should exceed 1. ({k_hat})')
    validate(sigma >= 0, f'Sigma should be non-negative. ({sigma})')
    return SmallnessConstants(alpha, lam, k_hat, sigma=sigma)


def integral_bound_probe(lam, sigma, t_grid):
    """Check int_0^t e^{-sigma(t-s)} (1+s)^{-lam} ds <= d1(lam, sigma) (1+t)^{-lam}.

    Returns:
        rows (list): t, integral, bound, tightness ratio and flag per grid time
    """
    validate(lam > 0 and sigma > 0, f'Lambda and sigma should be positive. ({lam}, {sigma})')
    constant = d1(lam, sigma)
    rows = []
    for t in t_grid:
        t = float(t)
        validate(t >= 0, f'Time should be non-negative. ({t})')
        value, err = 0.0, 0.0
        if t > 0:
            knee = t - 30.0 / sigma
            points = [knee] if 0 < knee < t else None
            value, err = sp_integrate.quad(lambda s, t=t: math.exp(-sigma * (t - s)) * (1.0 + s) ** (-lam),
                                           0.0, t, limit=200, points=points)
            if not math.isfinite(value) or err > 1e-6 * max(abs(value), 1e-12):
                raise RuntimeError(f'Quadrature failed at t={t}. (error estimate {err})')
        bound = constant * (1.0 + t) ** (-lam)
        rows.append({'t': t, 'integral': value, 'bound': bound, 'ratio': value / bound,
                     'holds': value <= bound, 'abserr': err})
    return rows


def bilinear_ratio(u, v, p):
    """Get |B(u,v)|_{a,s} / (|u|_{a+1/2,s} |v|_{a+1/2,s})."""
    half = p.shifted('1/2')
    den = gevrey_norm(u, half) * gevrey_norm(v, half)
    if den == 0:
        return 0.0
    return gevrey_norm(bilinear_B(u, v, max(u.cutoff, v.cutoff)), p) / den


def bilinear_ratios(samples, cutoff, p, seed=0, profile=None):
    """Get the ratios of random field pairs drawn from one generator."""
    validate(samples >= 1, f'Samples should be positive. ({samples})')
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        u = random_solenoidal_field(rng, cutoff, profile)
        v = random_solenoidal_field(rng, cutoff, profile)
        ratios.append(bilinear_ratio(u, v, p))
    return np.array(ratios)


def running_sup(ratios):
    """Get the running maximum of ratios."""
    return np.maximum.accumulate(np.asarray(ratios, dtype=float))


def estimate_bilinear_constant(samples, cutoff, p, seed=0, pairs=None, profile=None):
    """Get an empirical lower bound for K in |B(u,v)|_a <= K^a |u|_{a+1/2} |v|_{a+1/2}.

    Args:
        samples (int): number of random pairs
        cutoff (int): spectral cutoff of the random fields
        p (GevreyParams): (alpha, sigma), alpha > 0
        seed (int): seed of the generator stream
        pairs (list): explicit (u, v) pairs used instead of random ones
        profile (callable): spectrum profile of the random fields

    Returns:
        k_hat (float): (sup ratio)^{1/alpha}
    """
    validate(p.alpha > 0, f'Alpha should be positive. ({p.alpha})')
    if pairs is not None:
        ratios = [bilinear_ratio(u, v, p) for u, v in pairs]
    else:
        ratios = bilinear_ratios(samples, cutoff, p, seed=seed, profile=profile)
    return float(max(ratios, default=0.0)) ** (1.0 / float(p.alpha))


class DecayFit:
    """Power-law fit value ~ C t^{-exponent}."""

    def __init__(self, exponent, stderr, window, n_points, curvature, non_power):
        """Constructor."""
        self.exponent = exponent
        self.stderr = stderr
        self.window = window
        self.n_points = n_points
        self.curvature = curvature
        self.non_power = non_power

    def write(self):
        """Get a json object."""
        return {'exponent': self.exponent, 'stderr': self.stderr, 'window': list(self.window),
                'n_points': self.n_points, 'curvature': self.curvature, 'non_power': self.non_power}

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'exponent: {self.exponent:.4f} +- {self.stderr:.2e} '
                    f'on [{self.window[0]:.4g}, {self.window[1]:.4g}] ({self.n_points} points)')
        if self.non_power:
            print(pad + f'non-power decay (slope change {self.curvature:.3f})')


class ExponentialFit:
    """Fit of log(value) + t = beta log(t) + const."""

    def __init__(self, beta, stderr, window, n_points, rate_excess, poly_bound):
        """Constructor."""
        self.beta = beta
        self.stderr = stderr
        self.window = window
        self.n_points = n_points
        self.rate_excess = rate_excess
        self.poly_bound = poly_bound

    def __iter__(self):
        """Unpack as (beta, stderr)."""
        return iter((self.beta, self.stderr))

    def write(self):
        """Get a json object."""
        return {'beta': self.beta, 'stderr': self.stderr, 'window': list(self.window),
                'n_points': self.n_points, 'rate_excess': self.rate_excess, 'poly_bound': self.poly_bound}


def _select(times, values, window):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        window = (times[-1] / 10.0, times[-1])
    lo, hi = float(window[0]), float(window[1])
    validate(lo < hi, f'Fit window is empty. ({lo}, {hi})')
    mask = (times >= lo) & (times <= hi)
    t, v = times[mask], values[mask]
    if len(t) < MIN_POINTS:
        raise FitError(f'Decay fit needs at least {MIN_POINTS} points in the window. ({len(t)})')
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitError('Non-positive values in the fit window.')
    return t, v


def _curvature(x, y):
    """Get the slope change across the window and the significance of the quadratic term."""
    xc = x - x.mean()
    design = np.vstack([xc ** 2, xc, np.ones_like(xc)]).T
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    resid = y - design @ coef
    s2 = float(resid @ resid) / max(len(x) - 3, 1)
    se = math.sqrt(max(s2 * np.linalg.inv(design.T @ design)[0, 0], 0.0))
    change = abs(2.0 * coef[0] * (x.max() - x.min()))
    significant = se == 0 or abs(coef[0]) > 3.0 * se
    return float(change), bool(change > CURVATURE_LIMIT and significant)


def fit_power_decay(times, values, window=None):
    """Fit values ~ C t^{-exponent} by least squares in log-log scale.

    Args:
        times (list): sample times
        values (list): positive values
        window (tuple): (t_lo, t_hi). [t_end/10, t_end] if None.

    Returns:
        fit (DecayFit): exponent, stderr and the curvature test
    """
    t, v = _select(times, values, window)
    x, y = np.log(t), np.log(v)
    res = stats.linregress(x, y)
    curvature, non_power = _curvature(x, y)
    return DecayFit(float(-res.slope), float(res.stderr), (float(t[0]), float(t[-1])), len(t),
                    curvature, non_power)


def fit_exponential_remainder(times, values, window=None):
    """Fit log(value) + t = beta log(t) + const.

    Notes:
        The poly-bound check fits log(value) + t = a + b t + beta log(t)
        and requires |b| <= RATE_TOLERANCE, i.e. e^t value grows at most like a power of t.

    Returns:
        fit (ExponentialFit): beta, stderr and the poly-bound flag. Unpacks as (beta, stderr).
    """
    t, v = _select(times, values, window)
    y = np.log(v) + t
    res = stats.linregress(np.log(t), y)
    design = np.vstack([np.ones_like(t), t, np.log(t)]).T
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    rate = float(coef[1])
    return ExponentialFit(float(res.slope), float(res.stderr), (float(t[0]), float(t[-1])), len(t),
                          rate, abs(rate) <= RATE_TOLERANCE)


def remainder_params(p, rho):
    """Get (alpha + 1 - rho, sigma)."""
    rho = to_fraction(rho)
    validate(0 < rho < 1, f'Rho should be in (0, 1). ({rho})')
    return GevreyParams(p.alpha + 1 - rho, p.sigma)


def remainder_norms(traj, sol, N, p, rho=0.5):
    """Get |u(t) - sum_{n<=N} xi_n t^{-mu_n}|_{alpha+1-rho,sigma} over the record grid."""
    validate(0 <= N <= len(sol), f'N out of range. ({N})')
    if sol.cutoff != traj.cutoff:
        raise ValidationError(f'Trajectory and expansion cutoffs differ. ({traj.cutoff} != {sol.cutoff})')
    q = remainder_params(p, rho)
    coeffs = traj.coeffs
    if N > 0:
        # t^{-mu} is undefined at t <= 0; those samples become NaN
        times = traj.times[:, None]
        with np.errstate(divide='ignore', invalid='ignore'):
            weights = np.where(times > 0, np.abs(times) ** (-sol.mu_values()[None, :N]), np.nan)
        coeffs = coeffs - np.einsum('tn,nmc->tmc', weights, sol.coeff_stack()[:N])
    return traj.norms(q, coeffs)


def nonlinear_norms(traj, p, eps=0.5):
    """Get |B(u(t), u(t))|_{alpha+1/2-eps,sigma} over the record grid."""
    q = GevreyParams(p.alpha + to_fraction('1/2') - to_fraction(eps), p.sigma)
    cutoff = traj.cutoff
    coeffs = np.stack([bilinear_coeffs(c, cutoff, c, cutoff, cutoff) for c in traj.coeffs])
    return traj.norms(q, coeffs)


class RemainderRow:
    """One remainder fit: partial sum N at (alpha+1-rho, sigma)."""

    def __init__(self, N, params, rho, values, fit, predicted, predicted_finite, flags):
        """Constructor."""
        self.N = N
        self.params = params
        self.rho = rho
        self.values = values
        self.fit = fit
        self.predicted = predicted
        self.predicted_finite = predicted_finite
        self.flags = flags
        if fit is None:
            self.margin = None
            self.passed = 'floor-limited' in flags
        else:
            self.margin = fit.exponent - float(predicted)
            self.passed = self.margin >= -PASS_MARGIN and fit.stderr < MAX_STDERR

    def write(self):
        """Get a json object."""
        return {
            'N': self.N,
            'alpha_eff': str(self.params.alpha),
            'sigma': self.params.sigma,
            'rho': float(self.rho),
            'exponent': None if self.fit is None else self.fit.exponent,
            'stderr': None if self.fit is None else self.fit.stderr,
            'window': None if self.fit is None else list(self.fit.window),
            'n_points': 0 if self.fit is None else self.fit.n_points,
            'predicted': str(self.predicted),
            'predicted_finite': None if self.predicted_finite is None else str(self.predicted_finite),
            'margin': self.margin,
            'pass': self.passed,
            'flags': self.flags,
        }

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        exponent = 'n/a' if self.fit is None else f'{self.fit.exponent:.4f} +- {self.fit.stderr:.1e}'
        print(pad + f'N={self.N} rho={float(self.rho)} alpha_eff={self.params.alpha} sigma={self.params.sigma}: '
                    f'{exponent} (predicted {self.predicted}) {"pass" if self.passed else "FAIL"} {self.flags}')


def _first_valid(times, values):
    """Get the first finite value at positive time."""
    valid = np.flatnonzero((np.asarray(times) > 0) & np.isfinite(values))
    if len(valid) == 0:
        raise FitError('No finite sample at positive time.')
    return float(values[valid[0]])


def _fit_row(times, values, window, floor_value):
    """Fit one remainder series, shrinking the window at the floating-point floor."""
    flags = []
    times = np.asarray(times)
    if window is None:
        window = (times[-1] / 10.0, times[-1])
    mask = (times >= window[0]) & (times <= window[1])
    t, v = times[mask], np.asarray(values)[mask]
    valid = (t > 0) & np.isfinite(v)
    if not np.all(valid):
        t, v = t[valid], v[valid]
        flags.append('invalid-dropped')
    above = v > floor_value
    if not np.all(above):
        first = int(np.argmin(above))
        t, v = t[:first], v[:first]
        flags.append('window-shrunk')
    if len(t) < MIN_POINTS:
        # only samples lost to the floor make a short window acceptable
        flags.append('floor-limited' if 'window-shrunk' in flags else 'too-few-points')
        return None, flags
    fit = fit_power_decay(t, v, (t[0], t[-1]))
    if fit.non_power:
        flags.append('non-power')
    if fit.stderr >= MAX_STDERR:
        flags.append('large-stderr')
    return fit, flags


class RemainderReport:
    """Remainder fits of one trajectory."""

    def __init__(self, experiment, rows):
        """Constructor."""
        self.experiment = experiment
        self.rows = rows

    @property
    def passed(self):
        """Check if every row passes."""
        return all(row.passed for row in self.rows)

    def monotone(self, tolerance=PASS_MARGIN):
        """Check that adding a term never slows the fitted decay (per rho and sigma).

        Notes:
            Floor-limited rows are skipped.
        """
        last = {}
        for row in sorted(self.rows, key=lambda r: (float(r.rho), r.params.sigma, r.N)):
            if row.fit is None:
                continue
            key = (row.rho, row.params.sigma)
            if key in last and row.fit.exponent < last[key] - tolerance:
                return False
            last[key] = row.fit.exponent
        return True

    def write(self):
        """Get a json object."""
        return {'experiment': self.experiment, 'fits': [row.write() for row in self.rows],
                'monotone': self.monotone()}

    def print(self, padding=2):
        """Print meta data."""
        print(' ' * padding + f'{self.experiment}:')
        for row in self.rows:
            row.print(padding=padding + 2)


def remainder_report(traj, sol, ns, p, rhos=(0.5,), window=None, finite=None, experiment='', floor=FLOOR):
    """Fit remainder decay rates for several partial sums.

    Args:
        traj (Trajectory): Galerkin run
        sol (SolutionExpansion): expansion at the trajectory cutoff
        ns (list): partial sums N to measure
        p (GevreyParams): working (alpha, sigma)
        rhos (list): regularity losses rho in (0, 1)
        window (tuple): fit window. [t_end/10, t_end] if None.
        finite (tuple): optional (N_*, eps_*) adding the finite-expansion prediction at N = N_*
        experiment (string): report id
        floor (float): relative floating-point floor

    Returns:
        report (RemainderReport): one row per (rho, N)
    """
    rows = []
    for rho in rhos:
        base = remainder_norms(traj, sol, 0, p, rho)
        floor_value = floor * _first_valid(traj.times, base)
        for n in ns:
            values = base if n == 0 else remainder_norms(traj, sol, n, p, rho)
            if n < len(sol):
                predicted = sol.seq.mu(n + 1)
            else:
                predicted = next_exponent(sol.seq)
            predicted_finite = None
            if finite is not None and n == finite[0]:
                predicted_finite = sol.seq.mu(n) + finite[1]
            fit, flags = _fit_row(traj.times, values, window, floor_value)
            if fit is not None and fit.exponent > float(predicted) + PASS_MARGIN:
                flags.append('faster-than-predicted')
            rows.append(RemainderRow(n, remainder_params(p, rho), to_fraction(rho), values, fit, predicted,
                                     predicted_finite, flags))
    return RemainderReport(experiment, rows)


def decay_bound_report(traj, force, p, lam, consts):
    """Check the small-data hypotheses and measure the decay bounds they imply.

    Notes:
        Hypotheses: |A^alpha u0| <= c_0 and |f(t)|_{alpha-1/2,sigma} <= c_1 (1+t)^{-lam} on the grid.
        Bounds for t >= t_*: |u(t)|_{alpha,sigma} <= sqrt(2) c_* (1+t)^{-lam} and
        int_t^{t+1} |u|_{alpha+1/2,sigma}^2 <= 2 c_*^2 (1 + 1/(2 M_2)) (1+t)^{-2 lam}.
    """
    times = traj.times
    u0_norm = gevrey_norm(traj.u0, GevreyParams(p.alpha, 0))
    model = force.at_cutoff(traj.cutoff)
    fp = GevreyParams(p.alpha - to_fraction('1/2'), p.sigma)
    weights = fp.weights(get_modes(traj.cutoff))
    f_norms = np.array([math.sqrt(2.0 * float(np.sum(weights * np.sum(np.abs(model.coeffs_at(t)) ** 2, axis=1))))
                        for t in times])
    f_ratio = float(np.max(f_norms * (1.0 + times) ** lam)) / consts.c1

    late = times >= consts.t_star
    u_norms = traj.norms(p)
    u_ratio = None
    if np.any(late):
        u_ratio = float(np.max(u_norms[late] * (1.0 + times[late]) ** lam)) / (math.sqrt(2.0) * consts.c_star)

    grad = traj.norms(p.shifted('1/2')) ** 2
    cumulative = sp_integrate.cumulative_trapezoid(grad, x=times, initial=0)
    usable = late & (times + 1.0 <= times[-1])
    int_ratio = None
    if np.any(usable):
        window = np.interp(times[usable] + 1.0, times, cumulative) - cumulative[usable]
        limit = 2.0 * consts.c_star ** 2 * (1.0 + 1.0 / (2.0 * consts.m2)) * (1.0 + times[usable]) ** (-2 * lam)
        int_ratio = float(np.max(window / limit))
    return {
        'u0_ratio': u0_norm / consts.c0,
        'force_ratio': f_ratio,
        'hypotheses_hold': u0_norm <= consts.c0 and f_ratio <= 1.0,
        'decay_ratio': u_ratio,
        'integral_ratio': int_ratio,
        'bounds_hold': (u_ratio is None or u_ratio <= 1.0) and (int_ratio is None or int_ratio <= 1.0),
    }
