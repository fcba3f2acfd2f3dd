"""Command line interface.

Notes:
    python -m nse_power_expansion <command> --config <file or builtin:name> [options]
    Every command writes into <out-dir>/<name>/ with config.json, summary.txt and manifest.json.
    Exit codes: 0 ok, 2 invalid input, 3 runtime failure, 4 failed checks (pipeline --check).
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import glob
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import bilinear_ratios, d0, decay_bound_report, fit_exponential_remainder, fit_power_decay, \
    heat_bound_check, integral_bound_probe, mx2_check, nonlinear_norms, probe_d0, remainder_norms, \
    remainder_report, running_sup, smallness_constants
from .config import ExperimentConfig
from .expansion import ForceExpansion, SolutionExpansion, construct_admissible_force, evaluate_series, \
    forward_recursion, inverse_recursion, regularity_chain
from .exponents import epsilon_star, generate_semigroup, next_exponent, parse_exponent, parse_exponent_list
from .solver import Trajectory, energy_budget, integrate
from .spectral import random_solenoidal_field, to_fraction
from .util import io_util as io
from .util.errors import FitError, ValidationError, validate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

SERIES_T = 1.0
D0_TOLERANCE = 1e-6
MANIFEST = 'manifest.json'


def get_args(argv=None):
    """Get arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='Experiment json file or builtin:<name>')
    common.add_argument('--out-dir', default='runs', help='Root folder of run folders')
    common.add_argument('--threads', type=int, default=1, help='Worker threads for independent runs')
    common.add_argument('--seed', type=int, default=None, help='Use a single initial data seed')
    common.add_argument('--verbose', action='store_true', help='Show logs')

    parser = argparse.ArgumentParser(prog='nse_power_expansion',
                                     description='Power-decay expansions of periodic Navier-Stokes flows.')
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command', required=True)

    exponents = sub.add_parser('exponents', parents=[common], help='List the generated exponents',
                               description='Print a json object {"gammas", "cutoff", "exponents", "next"}. '
                                           '"exponents" is the list of {"mu", "origin"} entries in increasing order. '
                                           '"next" is the smallest exponent above the cutoff.')
    exponents.add_argument('--gammas', default=None, help='Comma separated exponents, e.g. "1,3/2"')
    exponents.add_argument('--cutoff', default=None, help='Largest exponent')
    exponents.add_argument('--output', default=None, help='Write the json object here instead of stdout')

    coeffs = sub.add_parser('coeffs', parents=[common], help='Compute expansion coefficients')
    coeffs.add_argument('--direction', choices=['forward', 'inverse'], default='forward',
                        help='forward: force -> solution. inverse: solution -> force')
    coeffs.add_argument('--expansion', default=None, help='Expansion json used instead of the config source')

    sub.add_parser('construct-force', parents=[common], help='Build the force of prescribed coefficients')
    sub.add_parser('simulate', parents=[common], help='Integrate the Galerkin system for every seed')
    sub.add_parser('analyze', parents=[common], help='Fit remainder decay rates')
    sub.add_parser('probe', parents=[common], help='Probe the functional inequalities and constants')

    pipeline = sub.add_parser('pipeline', parents=[common], help='Run every step')
    pipeline.add_argument('--check', action='store_true', help='Exit with 4 when a check fails')

    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error(f'--threads should be positive. ({args.threads})')
    return args


def load_config(args, required=True):
    """Load the experiment config and apply the command line overrides."""
    if args.config is None:
        validate(not required, f'{args.command} needs --config.')
        return None
    try:
        config = ExperimentConfig.load(args.config, verbose=args.verbose)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f'Invalid config. ({exc.__class__.__name__}: {exc})') from exc
    if args.seed is not None:
        config.seeds = [args.seed]
    return config


class RunFolder:
    """Output folder of an experiment."""

    def __init__(self, root, config, verbose=False):
        """Constructor."""
        self.folder = os.path.join(root, config.name)
        self.config = config
        self.verbose = verbose
        io.mkdir(self.folder)

    def path(self, name):
        """Get a file path in the folder."""
        return os.path.join(self.folder, name)

    def save_json(self, name, obj):
        """Save a report."""
        file = self.path(name)
        if self.verbose:
            print('Saving ' + file + '...')
        io.save_json(file, obj)
        return file

    def load_json(self, name):
        """Load a report, or None."""
        file = self.path(name)
        if not os.path.exists(file):
            return None
        return io.load_json(file)

    @staticmethod
    def traj_name(seed):
        """Get the csv name of a seed."""
        return f'traj_seed{seed}.csv'

    def finish(self):
        """Write the config snapshot, the summary and the manifest."""
        self.config.save(self.path('config.json'))
        io.write_text(self.path('summary.txt'), build_summary(self))
        write_manifest(self.folder)


def write_manifest(folder):
    """Map every file in a run folder to its sha256."""
    files = {}
    for file in sorted(os.listdir(folder)):
        path = os.path.join(folder, file)
        if file == MANIFEST or io.get_ext(file) == 'tmp' or os.path.isdir(path):
            continue
        files[file] = io.content_hash(path)
    io.save_json(os.path.join(folder, MANIFEST), files)
    return files


def _fmt(value, spec='.4g'):
    return 'n/a' if value is None else format(value, spec)


def build_summary(run):
    """Get a text summary of the reports found in a run folder."""
    lines = [f'experiment: {run.config.name}']
    coeffs = run.load_json('coeffs_report.json')
    if coeffs is not None:
        series = coeffs['series']
        lines.append(f'coeffs ({coeffs["direction"]}): {len(series["norms"])} terms, '
                     f'T1 {_fmt(series["T1"])}, divergent {series["divergent"]}')
    construction = run.load_json('construction_report.json')
    if construction is not None:
        lines.append(f'construct-force: support {construction["support"]}, '
                     f'round trip {_fmt(construction["roundtrip_error"], ".3e")}, '
                     f'summability {construction["summability"]["flag"]}')
    for sidecar in sorted(glob.glob(os.path.join(run.folder, 'traj_seed*.json'))):
        meta = io.load_json(sidecar)
        lines.append(f'simulate: {meta["csv"]} ({meta["n_records"]} records, '
                     f'cutoff {meta["config"]["cutoff"]}, t_end {meta["config"]["t_end"]})')
    analysis = run.load_json('analysis.json')
    if analysis is not None:
        summary = analysis['summary']
        lines.append(f'analyze: {"pass" if summary["pass"] else "FAIL"} '
                     f'({summary["n_failed"]} of {summary["n_fits"]} fits failed)')
        for fit in analysis['fits']:
            lines.append(f'  seed {fit["seed"]} N={fit["N"]} rho={fit["rho"]} sigma={fit["sigma"]}: '
                         f'{_fmt(fit["exponent"])} (predicted {fit["predicted"]}) '
                         f'{"pass" if fit["pass"] else "FAIL"} {" ".join(fit["flags"])}'.rstrip())
        for fit in analysis['exponential']:
            lines.append(f'  seed {fit["seed"]} exponential: beta {_fmt(fit["beta"])}, '
                         f'poly bound {"pass" if fit["poly_bound"] else "FAIL"}')
    probe = run.load_json('probe.json')
    if probe is not None:
        lines.append(f'probe: {"pass" if probe["pass"] else "FAIL"}, '
                     f'K_hat lower bound {_fmt(probe["bilinear"]["k_hat_lower"])}, '
                     f'd0 max error {_fmt(probe["d0_max_error"], ".2e")}, '
                     f'integral bound {"holds" if probe["integral_bound_holds"] else "FAILED"}')
    return '\n'.join(lines) + '\n'


def force_expansion(config):
    """Get the force expansion at the solver cutoff. Zeta sources are turned into forces first."""
    cutoff = config.solver.cutoff
    exp = config.expansion()
    if isinstance(exp, SolutionExpansion):
        return construct_admissible_force(exp, config.gevrey, config.k_hat, cutoff=cutoff).force
    return exp.at_cutoff(cutoff)


def run_coeffs(config, run, direction='forward', expansion_file=None, verbose=False):
    """Compute coefficients and their diagnostics."""
    cutoff = config.solver.cutoff
    p = config.gevrey
    if direction == 'forward':
        if expansion_file is not None:
            force = ForceExpansion.load(expansion_file, verbose=verbose).at_cutoff(cutoff)
        else:
            force = force_expansion(config)
        sol = forward_recursion(force, cutoff=cutoff)
        run.save_json('solution.json', sol.write())
    else:
        if expansion_file is not None:
            sol = SolutionExpansion.load(expansion_file, verbose=verbose)
        else:
            sol = config.expansion()
            validate(isinstance(sol, SolutionExpansion), 'Inverse direction needs a zeta force source.')
        sol = sol.at_cutoff(cutoff)
        force = inverse_recursion(sol, cutoff=cutoff)
        run.save_json('force.json', force.write())

    _, diagnostics = evaluate_series(sol, SERIES_T, p)
    report = {
        'direction': direction,
        'gevrey': p.write(),
        'k_hat': config.k_hat,
        'exponents': sol.seq.write(),
        'force_norms': force.norms(p),
        'series': diagnostics.write(),
        'regularity': regularity_chain(force, sol, p, config.k_hat),
    }
    run.save_json('coeffs_report.json', report)
    if verbose:
        sol.print(p=p.shifted(1))
    return sol


def run_construct(config, run, verbose=False):
    """Build the force of the configured coefficients."""
    zetas = config.expansion()
    validate(isinstance(zetas, SolutionExpansion), 'construct-force needs a zeta force source.')
    constructed = construct_admissible_force(zetas, config.gevrey, config.k_hat, cutoff=config.solver.cutoff)
    run.save_json('force.json', constructed.force.write())
    run.save_json('construction_report.json', constructed.write())
    if verbose:
        constructed.print()
    return constructed


def run_simulate(config, run, threads=1, verbose=False):
    """Integrate the Galerkin system once per seed."""
    model = config.force_model(force_expansion(config))

    def simulate(seed):
        traj = integrate(config.solver, config.initial_field(seed), model, verbose=verbose)
        traj.save(run.path(RunFolder.traj_name(seed)))
        return traj

    with ThreadPoolExecutor(max_workers=threads) as pool:
        trajs = list(pool.map(simulate, config.seeds))
    return dict(zip(config.seeds, trajs))


def load_trajectories(config, run, verbose=False):
    """Load the trajectories of every seed."""
    trajs = {}
    for seed in config.seeds:
        file = run.path(RunFolder.traj_name(seed))
        if not os.path.exists(file):
            raise ValidationError(f'Trajectory not found. Run simulate first. ({file})')
        trajs[seed] = Trajectory.load(file, verbose=verbose)
        io.check(trajs[seed].cutoff, config.solver.cutoff,
                 msg=f'Trajectory cutoff does not match the config. ({file})')
    return trajs


def _finite(config, sol):
    """Get (N_*, eps_*) of a finite expansion, or None."""
    block = config.analysis.get('finite')
    delta = config.tail_delta()
    if block is None and delta is None:
        return None
    block = block or {}
    n_star = int(block.get('n_star', len(sol)))
    delta = block.get('delta', delta)
    return n_star, epsilon_star(sol.seq, n_star, delta)


def _agreement(fits):
    """Compare fitted exponents of the same row across seeds."""
    groups = {}
    for fit in fits:
        if fit['exponent'] is None:
            continue
        key = (fit['N'], fit['alpha_eff'], fit['sigma'], fit['rho'])
        groups.setdefault(key, []).append(fit)
    rows = []
    for (n, alpha, sigma, rho), group in sorted(groups.items(), key=lambda item: str(item[0])):
        if len(group) < 2:
            continue
        exponents = [fit['exponent'] for fit in group]
        spread = max(exponents) - min(exponents)
        combined = float(np.sqrt(sum(fit['stderr'] ** 2 for fit in group)))
        rows.append({'N': n, 'alpha_eff': alpha, 'sigma': sigma, 'rho': rho, 'spread': spread,
                     'combined_stderr': combined, 'agree': spread <= max(2 * combined, 0.2)})
    return rows


def run_analyze(config, run, trajs=None, verbose=False):
    """Fit remainder decay rates of every trajectory."""
    if trajs is None:
        trajs = load_trajectories(config, run, verbose=verbose)
    force = force_expansion(config)
    model = config.force_model(force)
    sol = forward_recursion(force, cutoff=config.solver.cutoff)
    ns = [int(n) for n in config.analysis['N']]
    validate(max(ns) <= len(sol), f'N exceeds the expansion length. ({max(ns)} > {len(sol)})')
    rhos = config.rhos()
    window = config.analysis.get('window')
    finite = _finite(config, sol)
    params = config.analysis_gevrey()

    fits, reports = [], []
    for seed, traj in trajs.items():
        for p in params:
            report = remainder_report(traj, sol, ns, p, rhos=rhos, window=window, finite=finite,
                                      experiment=f'{config.name}/seed{seed}')
            reports.append(report)
            for row in report.rows:
                fits.append({**row.write(), 'seed': seed})
            if verbose:
                report.print()

    exponential = []
    block = config.analysis.get('exponential')
    if block is not None:
        for seed, traj in trajs.items():
            for p in params:
                for rho in rhos:
                    values = remainder_norms(traj, sol, len(sol), p, rho)
                    fit = fit_exponential_remainder(traj.times, values, block.get('window'))
                    exponential.append({**fit.write(), 'seed': seed, 'sigma': p.sigma, 'rho': float(rho)})

    nonlinear = []
    eps = to_fraction(config.analysis.get('nonlinear_eps', '1/2'))
    for seed, traj in trajs.items():
        p = params[0]
        try:
            fit = fit_power_decay(traj.times, nonlinear_norms(traj, p, eps), window).write()
        except FitError:
            fit = None
        nonlinear.append({'seed': seed, 'eps': str(eps), 'predicted': str(2 * sol.seq.mu(1)), 'fit': fit})

    energy = [{**energy_budget(traj, model).write(), 'seed': seed} for seed, traj in trajs.items()]

    constants = {'K_hat': config.k_hat}
    decay = []
    lam = config.analysis.get('lambda')
    if lam is not None:
        p = config.gevrey
        consts = smallness_constants(p.alpha, float(lam), config.k_hat, p.sigma)
        constants = consts.write()
        decay = [{**decay_bound_report(traj, model, p, float(lam), consts), 'seed': seed}
                 for seed, traj in trajs.items()]

    n_failed = sum(1 for fit in fits if not fit['pass'])
    summary = {
        'n_fits': len(fits),
        'n_failed': n_failed,
        'monotone': all(report.monotone() for report in reports),
        'exponential_pass': all(fit['poly_bound'] for fit in exponential),
        'energy_holds': all(e['inequality_holds'] for e in energy),
    }
    summary['pass'] = (n_failed == 0 and summary['monotone'] and summary['exponential_pass']
                       and summary['energy_holds'])
    obj = {
        'experiment': config.name,
        'fits': fits,
        'finite': None if finite is None else {'n_star': finite[0], 'eps_star': str(finite[1])},
        'exponential': exponential,
        'nonlinear': nonlinear,
        'energy': energy,
        'decay_bounds': decay,
        'seed_agreement': _agreement(fits),
        'constants': constants,
        'summary': summary,
    }
    run.save_json('analysis.json', obj)
    return obj


def probe_passed(obj):
    """Check that every probed inequality holds and d0 matches its numerical maximum."""
    return bool(obj['d0_max_error'] < D0_TOLERANCE and obj['integral_bound_holds']
                and all(row['holds'] for row in obj['mx2']) and all(row['holds'] for row in obj['heat']))


def run_probe(config, run, verbose=False):
    """Probe the elementary inequalities, the bilinear constant and the smallness constants."""
    probe = config.probe
    grid = probe['d0_grid']
    d0_rows = []
    for a in grid['a']:
        for s in grid['s']:
            closed, numeric = d0(a, s), probe_d0(a, s)
            d0_rows.append({'a': a, 's': s, 'closed': closed, 'numeric': numeric,
                            'rel_error': abs(closed - numeric) / closed})

    integral_rows = []
    for lam in probe['lambdas']:
        for sigma in probe['sigmas']:
            integral_rows.append({'lambda': lam, 'sigma': sigma,
                                  'rows': integral_bound_probe(lam, sigma, probe['t_grid'])})

    xs = np.linspace(0.0, float(probe['x_max']), 2001)
    mx2_rows = []
    for a in grid['a']:
        for s in grid['s']:
            holds, ratio = mx2_check(a, s, xs)
            mx2_rows.append({'a': a, 's': s, 'holds': holds, 'ratio': ratio})

    cutoff = int(probe['cutoff'])
    v = random_solenoidal_field(int(probe['seed']), cutoff)
    heat_rows = []
    for a in grid['a']:
        for tau in grid['s']:
            holds, lhs, rhs = heat_bound_check(a, tau, v)
            heat_rows.append({'a': a, 'tau': tau, 'holds': holds, 'lhs': lhs, 'rhs': rhs})

    p = config.gevrey
    validate(p.alpha > 0, f'Alpha should be positive. ({p.alpha})')
    samples = int(probe['samples'])
    sup = running_sup(bilinear_ratios(samples, cutoff, p, seed=int(probe['seed'])))
    power = 1.0 / float(p.alpha)
    half = sup[max(samples // 2, 1) - 1] ** power
    lower = sup[-1] ** power
    bilinear = {'samples': samples, 'cutoff': cutoff, 'seed': int(probe['seed']), 'gevrey': p.write(),
                'k_hat_lower': lower, 'k_hat_half': half, 'drift': (lower - half) / lower if lower > 0 else 0.0}

    smallness = []
    if p.alpha >= to_fraction('1/2') and config.k_hat > 1:
        smallness = [smallness_constants(p.alpha, lam, config.k_hat, p.sigma).write() for lam in probe['lambdas']]

    obj = {
        'd0': d0_rows,
        'd0_max_error': max(row['rel_error'] for row in d0_rows),
        'integral_bound': integral_rows,
        'integral_bound_holds': all(r['holds'] for row in integral_rows for r in row['rows']),
        'mx2': mx2_rows,
        'heat': heat_rows,
        'bilinear': bilinear,
        'smallness': smallness,
    }
    obj['pass'] = probe_passed(obj)
    run.save_json('probe.json', obj)
    if verbose:
        print(f'  K_hat lower bound: {lower:.6g} ({samples} samples, drift {bilinear["drift"]:.3e})')
    return obj


def cmd_exponents(args):
    """List the generated exponents."""
    config = load_config(args, required=False)
    if args.gammas is not None:
        gammas = parse_exponent_list(args.gammas)
    else:
        validate(config is not None and config.gammas is not None, 'exponents needs --gammas or --config.')
        gammas = config.gammas
    if args.cutoff is not None:
        cutoff = parse_exponent(args.cutoff)
    else:
        validate(config is not None and config.cutoff_mu is not None, 'exponents needs --cutoff or --config.')
        cutoff = config.cutoff_mu
    seq = generate_semigroup(gammas, cutoff)
    obj = {'gammas': [str(g) for g in seq.gammas], 'cutoff': str(seq.cutoff), 'exponents': seq.write(),
           'next': str(next_exponent(seq))}
    if args.output is not None:
        io.save_json(args.output, obj)
    else:
        print(io.dump_json(obj), end='')
    return EXIT_OK


def _with_run(func):
    """Load the config, run a step and finish the run folder."""
    def command(args):
        config = load_config(args)
        run = RunFolder(args.out_dir, config, verbose=args.verbose)
        func(config, run, args)
        run.finish()
        return EXIT_OK
    command.__doc__ = func.__doc__
    return command


@_with_run
def cmd_coeffs(config, run, args):
    """Compute expansion coefficients."""
    run_coeffs(config, run, direction=args.direction, expansion_file=args.expansion, verbose=args.verbose)


@_with_run
def cmd_construct_force(config, run, args):
    """Build a force from prescribed coefficients."""
    run_construct(config, run, verbose=args.verbose)


@_with_run
def cmd_simulate(config, run, args):
    """Integrate the Galerkin system."""
    run_simulate(config, run, threads=args.threads, verbose=args.verbose)


@_with_run
def cmd_analyze(config, run, args):
    """Fit remainder decay rates."""
    run_analyze(config, run, verbose=args.verbose)


@_with_run
def cmd_probe(config, run, args):
    """Probe the inequalities."""
    run_probe(config, run, verbose=args.verbose)


def cmd_pipeline(args):
    """Run every step."""
    config = load_config(args)
    run = RunFolder(args.out_dir, config, verbose=args.verbose)
    if args.verbose:
        print(f'Running {config.name}...')
        config.print()
    run_coeffs(config, run, verbose=args.verbose)
    if config.force['source'] == 'zeta':
        run_construct(config, run, verbose=args.verbose)
    trajs = run_simulate(config, run, threads=args.threads, verbose=args.verbose)
    analysis = run_analyze(config, run, trajs=trajs, verbose=args.verbose)
    probe = run_probe(config, run, verbose=args.verbose)
    run.finish()
    if args.check and not (analysis['summary']['pass'] and probe['pass']):
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    'exponents': cmd_exponents,
    'coeffs': cmd_coeffs,
    'construct-force': cmd_construct_force,
    'simulate': cmd_simulate,
    'analyze': cmd_analyze,
    'probe': cmd_probe,
    'pipeline': cmd_pipeline,
}


def report_error(exc):
    """Print a json error line to stderr."""
    print(json.dumps({'error': exc.__class__.__name__, 'message': str(exc)}), file=sys.stderr)


def main(argv=None):
    """Run a command and get the exit code."""
    args = get_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        report_error(exc)
        return EXIT_INVALID
    except RuntimeError as exc:
        report_error(exc)
        return EXIT_RUNTIME
