"""Galerkin time integration.

Notes:
    Solves du/dt + Au + P B(u, u) = P f(t) on the modes |k|^2 <= cutoff,
    and the linear system w' = -Aw + xi + f(t).
    The steppers are integrating-factor (Lawson) schemes.
    e^{-h|k|^2} is applied exactly per mode. Only the force and the nonlinearity go through the
    explicit rule, so purely linear runs are exact for any step.
"""
from io import StringIO
import math
import os

import numpy as np
from scipy import integrate as sp_integrate

from .expansion import ForceExpansion
from .exponents import parse_exponent
from .spectral import GevreyParams, SpectralField, bilinear_coeffs, get_modes
from .util import io_util as io
from .util.errors import BlowUpError, ValidationError, validate

BLOW_UP_FACTOR = 1e6
GUARD_INTERVAL = 256


class ForceModel:
    """Force built from an expansion, defined for all t >= 0.

    Notes:
        frozen_before: f(t) = S(T0) for t < T0, S(t) after.
        series_from: f(t) = 0 for t < T0, S(t) after.
        S(t) = sum phi_n (t+shift)^{-mu_n} + psi_tail (t+shift)^{-(mu_max+delta)}.
        T0 = 1, shift = 0 in frozen_before mode gives the constant sum phi_n before t = 1.
    """

    FROZEN_BEFORE = 'frozen_before'
    SERIES_FROM = 'series_from'
    MODES = [FROZEN_BEFORE, SERIES_FROM]

    def __init__(self, expansion, t0=1.0, mode=FROZEN_BEFORE, shift=0.0, tail=None):
        """Constructor.

        Args:
            expansion (ForceExpansion): force terms
            t0 (float): switch time T0
            mode (string): frozen_before or series_from
            shift (float): time shift inside the powers
            tail (tuple): optional (delta, psi) remainder term
        """
        validate(mode in ForceModel.MODES, f'Unsupported force mode. ({mode})')
        validate(t0 >= 0 and t0 + shift > 0, f'T0 + shift should be positive. ({t0}, {shift})')
        self.expansion = expansion
        self.t0 = float(t0)
        self.mode = mode
        self.shift = float(shift)
        self.tail = None
        if tail is not None:
            delta, psi = tail
            self.tail = (parse_exponent(delta), psi.at_cutoff(expansion.cutoff))
        self._stack = expansion.coeff_stack()
        self._mus = expansion.mu_values()

    @property
    def cutoff(self):
        """Get cutoff."""
        return self.expansion.cutoff

    def tail_exponent(self):
        """Get mu_max + delta, or None."""
        if self.tail is None:
            return None
        return self.expansion.seq.mus[-1] + self.tail[0]

    def at_cutoff(self, cutoff):
        """Get the same model with all fields at another cutoff."""
        if cutoff == self.cutoff:
            return self
        tail = None if self.tail is None else (self.tail[0], self.tail[1].at_cutoff(cutoff))
        return ForceModel(self.expansion.at_cutoff(cutoff), t0=self.t0, mode=self.mode,
                          shift=self.shift, tail=tail)

    def coeffs_at(self, t):
        """Get stored coefficients of f(t)."""
        if t < self.t0:
            if self.mode == ForceModel.SERIES_FROM:
                return np.zeros(self._stack.shape[1:], dtype=complex)
            t = self.t0
        tau = t + self.shift
        coeffs = np.tensordot(tau ** (-self._mus), self._stack, axes=1)
        if self.tail is not None:
            coeffs = coeffs + self.tail[1].coeffs * tau ** (-float(self.tail_exponent()))
        return coeffs

    def evaluate(self, t):
        """Get f(t)."""
        validate(t >= 0, f'Time should be non-negative. ({t})')
        return SpectralField(self.cutoff, self.coeffs_at(float(t)))

    def write(self):
        """Get a json object."""
        tail = None
        if self.tail is not None:
            tail = {'delta': str(self.tail[0]), 'field': self.tail[1].write()}
        return {'expansion': self.expansion.write(), 'mode': self.mode, 't0': self.t0,
                'shift': self.shift, 'tail': tail}

    @staticmethod
    def read(obj):
        """Read a json object."""
        tail = obj.get('tail')
        if tail is not None:
            tail = (tail['delta'], SpectralField.read(tail['field']))
        return ForceModel(ForceExpansion.read(obj['expansion']), t0=obj.get('t0', 1.0),
                          mode=obj.get('mode', ForceModel.FROZEN_BEFORE), shift=obj.get('shift', 0.0),
                          tail=tail)

    @staticmethod
    def zero(cutoff):
        """Get f = 0."""
        return ForceModel(ForceExpansion.read({'gammas': ['1'], 'cutoff_mu': '1', 'cutoff': cutoff}))


def evaluate_force(force, t):
    """Evaluate a force model at time t."""
    return force.evaluate(t)


def _close_grid(times, t_end):
    """End a grid exactly at t_end."""
    if len(times) > 0 and abs(times[-1] - t_end) <= 1e-9 * max(1.0, t_end):
        times[-1] = t_end
    elif len(times) == 0 or times[-1] < t_end:
        times = np.append(times, t_end)
    return times


class SolverConfig:
    """Discretization of a Galerkin run."""

    SCHEMES = {'if_euler': 1, 'if_rk2': 2, 'if_rk4': 4}
    MAX_DT = 0.5

    def __init__(self, cutoff, dt=1e-2, t_end=1.0, scheme='if_rk4', record=None, t_start=0.0):
        """Constructor."""
        get_modes(cutoff)
        validate(scheme in SolverConfig.SCHEMES, f'Unsupported scheme. ({scheme})')
        validate(0 < dt <= SolverConfig.MAX_DT, f'dt should be in (0, {SolverConfig.MAX_DT}]. ({dt})')
        validate(0 <= t_start < t_end, f'Time interval is empty. ({t_start}, {t_end})')
        self.cutoff = int(cutoff)
        self.dt = float(dt)
        self.t_end = float(t_end)
        self.t_start = float(t_start)
        self.scheme = scheme
        if record is None:
            record = {'kind': 'geometric', 't_min': min(1.0, self.t_end), 'per_decade': 40}
        self.record = dict(record)
        self.record_times()

    @property
    def order(self):
        """Get convergence order of the scheme."""
        return SolverConfig.SCHEMES[self.scheme]

    def record_times(self):
        """Get sorted record times in [t_start, t_end]."""
        kind = self.record.get('kind')
        if kind == 'geometric':
            t_min = float(self.record.get('t_min', 1.0))
            per_decade = int(self.record.get('per_decade', 40))
            validate(t_min > 0 and per_decade > 0, f'Invalid geometric grid. ({self.record})')
            count = 0
            if t_min <= self.t_end:
                count = int(math.floor(per_decade * math.log10(self.t_end / t_min) + 1e-9)) + 1
            times = t_min * 10.0 ** (np.arange(count) / per_decade)
            times = _close_grid(times[(times >= self.t_start) & (times <= self.t_end)], self.t_end)
        elif kind == 'uniform':
            step = float(self.record.get('step', self.dt))
            validate(step > 0, f'Invalid uniform grid. ({self.record})')
            count = int(math.floor((self.t_end - self.t_start) / step + 1e-9)) + 1
            times = _close_grid(self.t_start + step * np.arange(count), self.t_end)
        elif kind == 'explicit':
            times = np.array(sorted(set(float(t) for t in self.record.get('times', []))))
            validate(len(times) > 0, 'Explicit record grid is empty.')
            validate(times[0] >= self.t_start and times[-1] <= self.t_end,
                     f'Record times should be within [{self.t_start}, {self.t_end}].')
        else:
            raise ValidationError(f'Unsupported record grid. ({kind})')
        return times

    def write(self):
        """Get a json object."""
        return {'cutoff': self.cutoff, 'dt': self.dt, 't_end': self.t_end, 't_start': self.t_start,
                'scheme': self.scheme, 'record': self.record}

    @staticmethod
    def read(obj):
        """Read a json object."""
        validate('cutoff' in obj, 'Solver config needs "cutoff".')
        return SolverConfig(obj['cutoff'], dt=obj.get('dt', 1e-2), t_end=obj.get('t_end', 1.0),
                            scheme=obj.get('scheme', 'if_rk4'), record=obj.get('record'),
                            t_start=obj.get('t_start', 0.0))

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'cutoff: {self.cutoff}')
        print(pad + f'scheme: {self.scheme}, dt: {self.dt}')
        print(pad + f'time: [{self.t_start}, {self.t_end}]')
        print(pad + f'records: {len(self.record_times())} ({self.record.get("kind")})')


def csv_header(cutoff):
    """Get the trajectory csv header of a cutoff."""
    cols = ['t']
    for k in get_modes(cutoff).ks:
        label = f'({k[0]} {k[1]} {k[2]})'
        cols += [f'{label} {part}_{axis}' for part in ['re', 'im'] for axis in 'xyz']
    return ','.join(cols)


class Trajectory:
    """Recorded samples of a Galerkin run."""

    NONLINEAR = 'nonlinear'
    LINEAR = 'linear'

    def __init__(self, times, coeffs, config, force, u0, kind=NONLINEAR, xi=None):
        """Constructor."""
        times = np.asarray(times, dtype=float)
        coeffs = np.asarray(coeffs, dtype=complex)
        validate(len(times) > 0, 'Trajectory has no samples.')
        validate(bool(np.all(np.diff(times) > 0)), 'Record times should be strictly increasing.')
        io.check(coeffs.shape, (len(times), get_modes(config.cutoff).size, 3),
                 msg='Trajectory coefficients do not match the cutoff.')
        self.times = times
        self.coeffs = coeffs
        self.config = config
        self.force = force
        self.u0 = u0
        self.kind = kind
        self.xi = xi
        for ary in [self.times, self.coeffs]:
            ary.setflags(write=False)

    @property
    def cutoff(self):
        """Get cutoff."""
        return self.config.cutoff

    def __len__(self):
        """Number of samples."""
        return len(self.times)

    def field(self, i):
        """Get the i-th recorded field."""
        return SpectralField(self.cutoff, self.coeffs[i])

    @property
    def samples(self):
        """Get (t, field) pairs."""
        return [(float(t), self.field(i)) for i, t in enumerate(self.times)]

    def norms(self, p, coeffs=None):
        """Get |u(t)|_{alpha,sigma} per sample."""
        coeffs = self.coeffs if coeffs is None else coeffs
        w = p.weights(get_modes(self.cutoff))
        return np.sqrt(2.0 * np.einsum('m,tm->t', w, np.sum(np.abs(coeffs) ** 2, axis=2)))

    def header(self):
        """Get the csv header."""
        return csv_header(self.cutoff)

    def to_csv(self):
        """Get csv text."""
        parts = np.stack([self.coeffs.real, self.coeffs.imag], axis=2)
        data = np.concatenate([self.times[:, None], parts.reshape(len(self.times), -1)], axis=1)
        buf = StringIO()
        np.savetxt(buf, data, delimiter=',', header=self.header(), comments='', fmt='%.17g')
        return buf.getvalue()

    def save(self, file):
        """Save as csv plus a json sidecar. Returns the sidecar path."""
        text = self.to_csv()
        io.write_text(file, text)
        sidecar = os.path.splitext(file)[0] + '.json'
        io.save_json(sidecar, {
            'csv': os.path.basename(file),
            'csv_sha256': io.text_hash(text),
            'kind': self.kind,
            'config': self.config.write(),
            'force': self.force.write(),
            'u0': self.u0.write(),
            'xi': None if self.xi is None else self.xi.write(),
            'n_records': len(self),
        })
        return sidecar

    @staticmethod
    def load(file, verbose=False):
        """Load a csv file and its sidecar."""
        if verbose:
            print('Loading ' + file + '...')
        meta = io.load_json(os.path.splitext(file)[0] + '.json')
        if io.content_hash(file) != meta['csv_sha256']:
            raise ValidationError(f'Trajectory file does not match its hash. ({file})')
        config = SolverConfig.read(meta['config'])
        with open(file, 'r', encoding='utf-8') as f:
            header = f.readline().rstrip('\n')
            data = np.loadtxt(f, delimiter=',', ndmin=2)
        io.check(header, csv_header(config.cutoff), msg=f'Trajectory header does not match its cutoff. ({file})')
        parts = data[:, 1:].reshape(len(data), -1, 2, 3)
        xi = meta.get('xi')
        return Trajectory(data[:, 0], parts[:, :, 0] + 1j * parts[:, :, 1], config,
                          ForceModel.read(meta['force']), SpectralField.read(meta['u0']),
                          kind=meta.get('kind', Trajectory.NONLINEAR),
                          xi=None if xi is None else SpectralField.read(xi))


def _step_if_euler(rhs, c, t, h, lam):
    e = np.exp(-h * lam)[:, None]
    return e * (c + h * rhs(c, t))


def _step_if_rk2(rhs, c, t, h, lam):
    e = np.exp(-h * lam)[:, None]
    k1 = rhs(c, t)
    k2 = rhs(e * (c + h * k1), t + h)
    return e * (c + 0.5 * h * k1) + 0.5 * h * k2


def _step_if_rk4(rhs, c, t, h, lam):
    e = np.exp(-h * lam)[:, None]
    e2 = np.exp(-0.5 * h * lam)[:, None]
    k1 = rhs(c, t)
    k2 = rhs(e2 * (c + 0.5 * h * k1), t + 0.5 * h)
    k3 = rhs(e2 * c + 0.5 * h * k2, t + 0.5 * h)
    k4 = rhs(e * c + h * e2 * k3, t + h)
    return e * c + h / 6.0 * (e * k1 + 2.0 * e2 * (k2 + k3) + k4)


STEPPERS = {'if_euler': _step_if_euler, 'if_rk2': _step_if_rk2, 'if_rk4': _step_if_rk4}


def _l2(c):
    return math.sqrt(2.0 * float(np.sum(np.abs(c) ** 2)))


def _advance(config, c0, rhs, verbose=False):
    """Step from t_start and record at every record time."""
    cutoff = config.cutoff
    lam = get_modes(cutoff).k2.astype(float)
    step = STEPPERS[config.scheme]
    times = config.record_times()
    scale = max(_l2(c0), _l2(rhs(np.zeros_like(c0), config.t_start)))
    limit = BLOW_UP_FACTOR * scale

    def guard(c, t):
        norm = _l2(c)
        if scale > 0 and not norm <= limit:
            raise BlowUpError(f'Solution norm exceeded the blow-up guard at t={t:.6g}. '
                              f'({norm:.3e} > {BLOW_UP_FACTOR:.0e} x {scale:.3e})')

    c = c0.copy()
    t = config.t_start
    records = np.zeros((len(times), get_modes(cutoff).size, 3), dtype=complex)
    count = 0
    for j, target in enumerate(times):
        tol = 1e-12 * max(1.0, abs(target))
        while target - t > tol:
            h = min(config.dt, target - t)
            c = step(rhs, c, t, h, lam)
            t = target if h == target - t else t + h
            count += 1
            if count % GUARD_INTERVAL == 0:
                guard(c, t)
        t = target
        guard(c, t)
        records[j] = c
        if verbose and (j + 1) % max(1, len(times) // 10) == 0:
            print(f'  t={t:.6g} ({j + 1}/{len(times)} records, {count} steps)')
    return times, records


def integrate(config, u0, force, verbose=False):
    """Integrate the Galerkin Navier-Stokes system.

    Args:
        config (SolverConfig): discretization
        u0 (SpectralField): initial data at t_start, cutoff <= config.cutoff
        force (ForceModel): force
        verbose (bool): print progress

    Returns:
        traj (Trajectory): samples at the record times
    """
    validate(u0.cutoff <= config.cutoff, f'Initial data exceeds the cutoff. ({u0.cutoff} > {config.cutoff})')
    cutoff = config.cutoff
    model = force.at_cutoff(cutoff)

    def rhs(c, t):
        return model.coeffs_at(t) - bilinear_coeffs(c, cutoff, c, cutoff, cutoff)

    if verbose:
        print(f'Integrating (cutoff {cutoff}, {config.scheme}, dt {config.dt}, t_end {config.t_end})...')
    times, records = _advance(config, u0.at_cutoff(cutoff).coeffs, rhs, verbose=verbose)
    return Trajectory(times, records, config, force, u0)


def integrate_linear(config, xi, force, w0=None, verbose=False):
    """Integrate w' = -Aw + xi + f(t).

    Notes:
        The stepper runs on y = w - A^{-1} xi, which solves y' = -Ay + f.
        The constant source is therefore handled by the exact propagator.
    """
    validate(xi.cutoff <= config.cutoff, f'Source exceeds the cutoff. ({xi.cutoff} > {config.cutoff})')
    cutoff = config.cutoff
    model = force.at_cutoff(cutoff)
    steady = xi.at_cutoff(cutoff).coeffs / get_modes(cutoff).k2[:, None]
    w0 = SpectralField.zeros(cutoff) if w0 is None else w0
    validate(w0.cutoff <= cutoff, f'Initial data exceeds the cutoff. ({w0.cutoff} > {cutoff})')

    def rhs(c, t):
        return model.coeffs_at(t)

    if verbose:
        print(f'Integrating linear system (cutoff {cutoff}, {config.scheme}, dt {config.dt})...')
    times, records = _advance(config, w0.at_cutoff(cutoff).coeffs - steady, rhs, verbose=verbose)
    return Trajectory(times, records + steady, config, force, w0, kind=Trajectory.LINEAR, xi=xi)


class EnergyBudget:
    """Energy equality residual and the exponential energy inequality along a run."""

    def __init__(self, times, residual, lhs, rhs, slack):
        """Constructor."""
        self.times = times
        self.residual = residual
        self.lhs = lhs
        self.rhs = rhs
        self.slack = slack
        self.margin = rhs - lhs
        self.holds = bool(np.all(self.margin >= -slack))

    @property
    def max_residual(self):
        """Get max |r(t)|."""
        return float(np.max(np.abs(self.residual)))

    def write(self):
        """Get a json object."""
        return {'max_residual': self.max_residual, 'inequality_holds': self.holds,
                'min_margin': float(np.min(self.margin)), 'slack': self.slack}

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'max |r(t)|: {self.max_residual:.3e}')
        print(pad + f'inequality: {"holds" if self.holds else "FAILED"} (min margin {np.min(self.margin):.3e})')


def _cumulative(values, times):
    if len(times) >= 3:
        return sp_integrate.cumulative_simpson(values, x=times, initial=0)
    return sp_integrate.cumulative_trapezoid(values, x=times, initial=0)


def energy_budget(traj, force):
    """Measure the energy equality and the exponential energy inequality.

    Notes:
        r(t) = |u(t)|^2/2 + int |grad u|^2 - |u(t0)|^2/2 - int <f, u> from the first sample t0.
        The inequality is |u(t)|^2 <= e^{-(t-t0)} |u(t0)|^2 + int e^{-(t-s)} |f(s)|^2 ds.

    Returns:
        budget (EnergyBudget): residual series and inequality check
    """
    times = traj.times
    model = force.at_cutoff(traj.cutoff)
    energy = traj.norms(GevreyParams(0, 0)) ** 2
    dissipation = traj.norms(GevreyParams('1/2', 0)) ** 2
    f_coeffs = np.stack([model.coeffs_at(t) for t in times])
    power = 2.0 * np.real(np.sum(f_coeffs * traj.coeffs.conj(), axis=(1, 2)))
    f_sq = 2.0 * np.sum(np.abs(f_coeffs) ** 2, axis=(1, 2))

    residual = (0.5 * energy + _cumulative(dissipation, times) - 0.5 * energy[0]
                - _cumulative(power, times))

    forced = np.zeros_like(times)
    for j in range(1, len(times)):
        h = times[j] - times[j - 1]
        decay = math.exp(-h)
        forced[j] = decay * forced[j - 1] + 0.5 * h * (decay * f_sq[j - 1] + f_sq[j])
    rhs = np.exp(-(times - times[0])) * energy[0] + forced
    steps = np.diff(times)
    slack = 1e-8 * float(np.max(rhs)) + (float(np.max(steps)) ** 2 * float(np.max(f_sq)) if len(steps) else 0.0)
    return EnergyBudget(times, residual, energy, rhs, slack)
