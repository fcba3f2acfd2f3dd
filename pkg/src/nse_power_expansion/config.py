"""Experiment configuration.

Notes:
    One json file describes one experiment.
    Referenced files are inlined on read, so write() gives a self-contained snapshot.
    "builtin:<name>" selects a json file shipped in nse_power_expansion/builtin/.
"""
import copy
import os

from .builtin.builtin import builtin_path, is_builtin
from .expansion import ForceExpansion, SolutionExpansion
from .exponents import parse_exponent
from .solver import ForceModel, SolverConfig
from .spectral import GevreyParams, SpectralField, power_profile, random_solenoidal_field, to_fraction
from .util import io_util as io
from .util.errors import ValidationError, validate

FORCE_MODEL_DEFAULTS = {'mode': ForceModel.FROZEN_BEFORE, 't0': 1.0, 'shift': 0.0, 'tail': None}
U0_DEFAULTS = {'amplitude': 0.05, 'slope': 1.0, 'max_k2': None}
ANALYSIS_DEFAULTS = {
    'N': [0, 1, 2],
    'rho': ['1/2'],
    'gevrey': None,
    'window': None,
    'exponential': None,
    'lambda': None,
    'finite': None,
    'nonlinear_eps': '1/2',
}
PROBE_DEFAULTS = {
    'samples': 1000,
    'cutoff': 8,
    'seed': 0,
    'lambdas': [1, 2],
    'sigmas': [0.5, 1.0],
    't_grid': [0, 1, 10, 100],
    'd0_grid': {'a': [0.5, 1, 2], 's': [0.5, 1, 2]},
    'x_max': 100.0,
}
KEYS = ['name', 'description', 'gammas', 'cutoff_mu', 'gevrey', 'force', 'force_model', 'solver', 'u0',
        'analysis', 'seeds', 'k_hat', 'probe']


def _block(obj, key, defaults):
    """Merge a sub-block with its defaults and reject unknown keys."""
    block = obj.get(key)
    if block is None:
        block = {}
    validate(isinstance(block, dict), f'"{key}" should be an object.')
    unknown = sorted(set(block) - set(defaults))
    validate(len(unknown) == 0, f'Unknown keys in "{key}". ({unknown})')
    merged = copy.deepcopy(defaults)
    merged.update(copy.deepcopy(block))
    return merged


def _load_ref(file, base_dir):
    """Load a json file referenced by a config."""
    path = file if os.path.isabs(file) else os.path.join(base_dir, file)
    try:
        return io.load_json(path)
    except FileNotFoundError as exc:
        raise ValidationError(f'Referenced file not found. ({path})') from exc
    except ValueError as exc:
        raise ValidationError(f'Failed to parse json. ({path})') from exc


def _inline(block, base_dir, key):
    """Get block[key], loading block["file"] if needed."""
    if key in block:
        return copy.deepcopy(block[key])
    validate('file' in block, f'Block needs "{key}" or "file".')
    return _load_ref(block['file'], base_dir)


class ExperimentConfig:
    """Parsed experiment file."""

    SOURCES = ['expansion', 'zeta', 'builtin']

    def __init__(self, name, force, solver, gammas=None, cutoff_mu=None, gevrey=None, force_model=None,
                 u0=None, analysis=None, seeds=(0,), k_hat=2.0, probe=None, description=''):
        """Constructor.

        Args:
            name (string): run name, also the run folder name
            force (dict): {"source": "expansion" or "zeta", "expansion": expansion object}
            solver (SolverConfig): discretization
            gammas (list): generating exponents
            cutoff_mu (Fraction): largest exponent
            gevrey (GevreyParams): working (alpha, sigma)
            force_model (dict): mode, t0, shift and tail
            u0 (dict): amplitude (L2 norm), slope and max_k2 of random initial data
            analysis (dict): N, rho, gevrey, window, exponential, lambda, finite, nonlinear_eps
            seeds (list): initial data seeds
            k_hat (float): stand-in for the bilinear constant
            probe (dict): inequality probe grids
            description (string): free text
        """
        validate(isinstance(name, str) and name != '' and os.path.basename(name) == name,
                 f'Invalid experiment name. ({name})')
        self.name = name
        self.description = description
        self.force = force
        self.solver = solver
        self.gammas = None if gammas is None else [parse_exponent(g) for g in gammas]
        self.cutoff_mu = None if cutoff_mu is None else parse_exponent(cutoff_mu)
        self.gevrey = gevrey if gevrey is not None else GevreyParams()
        self.force_model_block = copy.deepcopy(force_model if force_model is not None else FORCE_MODEL_DEFAULTS)
        self.u0 = copy.deepcopy(u0 if u0 is not None else U0_DEFAULTS)
        self.analysis = copy.deepcopy(analysis if analysis is not None else ANALYSIS_DEFAULTS)
        self.seeds = [int(s) for s in seeds]
        self.k_hat = float(k_hat)
        self.probe = copy.deepcopy(probe if probe is not None else PROBE_DEFAULTS)

        validate(len(self.seeds) > 0, 'Seeds should not be empty.')
        validate(len(set(self.seeds)) == len(self.seeds), f'Seeds should be unique. ({self.seeds})')
        validate(self.k_hat > 0, f'K_hat should be positive. ({k_hat})')
        validate(self.force.get('source') in ['expansion', 'zeta'],
                 f'Unsupported force source. ({self.force.get("source")})')
        validate(float(self.u0['amplitude']) >= 0, f'Initial amplitude should be non-negative. ({self.u0})')
        validate(all(int(n) >= 0 for n in self.analysis['N']), f'N should be non-negative. ({self.analysis["N"]})')
        if self.analysis['lambda'] is not None or self.force['source'] == 'zeta':
            validate(self.gevrey.alpha >= to_fraction('1/2'), f'Alpha should be at least 1/2. ({self.gevrey.alpha})')
        self.rhos()
        self.analysis_gevrey()

    def expansion(self):
        """Get the force expansion, or the prescribed solution coefficients for the zeta source."""
        obj = self.force['expansion']
        if self.force['source'] == 'zeta':
            return SolutionExpansion.read(obj)
        return ForceExpansion.read(obj)

    def force_model(self, force):
        """Wrap a force expansion into the configured model at the solver cutoff."""
        block = self.force_model_block
        tail = block.get('tail')
        if tail is not None:
            tail = (tail['delta'], SpectralField.read(tail['field']))
        return ForceModel(force.at_cutoff(self.solver.cutoff), t0=block['t0'], mode=block['mode'],
                          shift=block['shift'], tail=tail)

    def tail_delta(self):
        """Get delta of the force tail, or None."""
        tail = self.force_model_block.get('tail')
        return None if tail is None else parse_exponent(tail['delta'])

    def initial_field(self, seed):
        """Get random initial data at the solver cutoff, scaled to the configured L2 norm."""
        cutoff = self.solver.cutoff
        amplitude = float(self.u0['amplitude'])
        if amplitude == 0:
            return SpectralField.zeros(cutoff)
        profile = power_profile(1.0, self.u0['slope'], self.u0['max_k2'])
        field = random_solenoidal_field(seed, cutoff, profile)
        norm = field.norm()
        validate(norm > 0, f'Initial data profile is empty. ({self.u0})')
        return field * (amplitude / norm)

    def rhos(self):
        """Get regularity losses."""
        rhos = [to_fraction(r) for r in self.analysis['rho']]
        for rho in rhos:
            validate(0 < rho < 1, f'Rho should be in (0, 1). ({rho})')
        return rhos

    def analysis_gevrey(self):
        """Get the (alpha, sigma) pairs of the analysis. The working pair if none are given."""
        params = self.analysis.get('gevrey')
        if params is None:
            return [self.gevrey]
        return [GevreyParams.read(p) for p in params]

    def write(self):
        """Get a json object."""
        return {
            'name': self.name,
            'description': self.description,
            'gammas': None if self.gammas is None else [str(g) for g in self.gammas],
            'cutoff_mu': None if self.cutoff_mu is None else str(self.cutoff_mu),
            'gevrey': self.gevrey.write(),
            'force': self.force,
            'force_model': self.force_model_block,
            'solver': self.solver.write(),
            'u0': self.u0,
            'analysis': self.analysis,
            'seeds': self.seeds,
            'k_hat': self.k_hat,
            'probe': self.probe,
        }

    @staticmethod
    def _read_force(obj, base_dir, top):
        block = obj.get('force')
        validate(isinstance(block, dict), 'Config needs a "force" object.')
        source = block.get('source')
        validate(source in ExperimentConfig.SOURCES, f'Unsupported force source. ({source})')
        if source == 'builtin':
            validate('name' in block, 'Builtin force needs "name".')
            path = builtin_path(block['name'])
            other = io.load_json(path)
            return ExperimentConfig._read_force(other, os.path.dirname(path), other)
        exp = _inline(block, base_dir, 'expansion')
        validate(isinstance(exp, dict), 'Expansion should be an object.')
        for key in ['gammas', 'cutoff_mu']:
            if top.get(key) is None:
                continue
            if key not in exp:
                exp[key] = top[key]
                continue
            if key == 'gammas':
                same = [parse_exponent(g) for g in exp[key]] == [parse_exponent(g) for g in top[key]]
            else:
                same = parse_exponent(exp[key]) == parse_exponent(top[key])
            validate(same, f'Expansion "{key}" differs from the experiment. ({exp[key]} != {top[key]})')
        return {'source': source, 'expansion': exp}

    @staticmethod
    def read(obj, base_dir='.'):
        """Read a json object. Relative file references resolve against base_dir."""
        validate(isinstance(obj, dict), 'Config should be an object.')
        unknown = sorted(set(obj) - set(KEYS))
        validate(len(unknown) == 0, f'Unknown keys in config. ({unknown})')
        validate('name' in obj, 'Config needs "name".')
        validate(isinstance(obj.get('solver'), dict), 'Config needs a "solver" object.')

        force = ExperimentConfig._read_force(obj, base_dir, obj)
        exp = force['expansion']
        gammas = obj.get('gammas', exp.get('gammas'))
        cutoff_mu = obj.get('cutoff_mu', exp.get('cutoff_mu'))

        force_model = _block(obj, 'force_model', FORCE_MODEL_DEFAULTS)
        tail = force_model.get('tail')
        if tail is not None:
            validate(isinstance(tail, dict) and 'delta' in tail, 'Tail needs "delta".')
            force_model['tail'] = {'delta': str(parse_exponent(tail['delta'])),
                                   'field': _inline(tail, base_dir, 'field')}

        probe = _block(obj, 'probe', PROBE_DEFAULTS)
        return ExperimentConfig(
            obj['name'], force, SolverConfig.read(obj['solver']),
            gammas=gammas,
            cutoff_mu=cutoff_mu,
            gevrey=GevreyParams.read(obj.get('gevrey', {})),
            force_model=force_model,
            u0=_block(obj, 'u0', U0_DEFAULTS),
            analysis=_block(obj, 'analysis', ANALYSIS_DEFAULTS),
            seeds=obj.get('seeds', [0]),
            k_hat=obj.get('k_hat', 2.0),
            probe=probe,
            description=obj.get('description', ''),
        )

    @staticmethod
    def load(ref, verbose=False):
        """Load a json file or "builtin:<name>"."""
        file = builtin_path(ref) if is_builtin(ref) else ref
        if verbose:
            print('Loading ' + file + '...')
        obj = _load_ref(file, '.')
        return ExperimentConfig.read(obj, base_dir=os.path.dirname(os.path.abspath(file)))

    def save(self, file):
        """Save as a json file."""
        io.save_json(file, self.write())

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'name: {self.name}')
        if self.description:
            print(pad + f'description: {self.description}')
        print(pad + f'force source: {self.force["source"]}')
        print(pad + f'gevrey: {self.gevrey}')
        print(pad + f'seeds: {self.seeds}')
        self.solver.print(padding=padding)
