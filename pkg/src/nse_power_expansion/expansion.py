"""Expansion coefficients.

Notes:
    A force f(t) ~ sum phi_n t^{-mu_n} gives a solution u(t) ~ sum xi_n t^{-mu_n} with
        xi_1 = A^{-1} phi_1,
        xi_n = A^{-1} (phi_n + chi_n - sum_{mu_k + mu_m = mu_n} B(xi_k, xi_m)),
    where chi_n = mu_p xi_p when mu_p + 1 = mu_n and 0 otherwise.
    The inverse map is phi_n = A xi_n - chi_n + sum B(xi_k, xi_m).
    All products are truncated at one working cutoff.
"""
import math
import warnings

import numpy as np

from .exponents import ExponentSequence, generate_semigroup, pair_decompositions, shift_predecessor
from .spectral import GevreyParams, SpectralField, bilinear_coeffs, gevrey_norm, get_modes, to_fraction
from .util import io_util as io
from .util.errors import SeriesWarning, ValidationError, validate


class Expansion:
    """Exponent sequence with one spectral field per exponent."""

    KIND = 'expansion'

    def __init__(self, seq, fields, cutoff=None):
        """Constructor."""
        validate(len(seq) > 0, 'Expansion needs at least one exponent.')
        validate(len(fields) == len(seq),
                 f'Number of fields should match the exponents. ({len(fields)} != {len(seq)})')
        if cutoff is None:
            cutoff = max(f.cutoff for f in fields)
        self.seq = seq
        self.cutoff = int(cutoff)
        self.fields = tuple(f.at_cutoff(self.cutoff) for f in fields)

    def __len__(self):
        """Length."""
        return len(self.fields)

    def term(self, n):
        """Get the n-th field (1-based)."""
        validate(1 <= n <= len(self), f'Term index out of range. ({n})')
        return self.fields[n - 1]

    def at_cutoff(self, cutoff):
        """Get a copy with all fields at another cutoff."""
        return type(self)(self.seq, self.fields, cutoff=cutoff)

    def truncate(self, length):
        """Keep the first terms."""
        return type(self)(self.seq.truncate(length), self.fields[:length], cutoff=self.cutoff)

    def coeff_stack(self):
        """Get coefficients as an array of shape (terms, modes, 3)."""
        return np.stack([f.coeffs for f in self.fields])

    def mu_values(self):
        """Get exponents as floats."""
        return np.array([float(mu) for mu in self.seq.mus])

    def norms(self, p):
        """Get |field_n|_{alpha,sigma} for all n."""
        return [gevrey_norm(f, p) for f in self.fields]

    def partial_sum(self, t, n_terms=None):
        """Get sum_{n <= n_terms} field_n t^{-mu_n}."""
        if n_terms is None:
            n_terms = len(self)
        coeffs = np.zeros((get_modes(self.cutoff).size, 3), dtype=complex)
        for mu, f in zip(self.seq.mus[:n_terms], self.fields[:n_terms]):
            coeffs = coeffs + f.coeffs * float(t) ** (-float(mu))
        return SpectralField(self.cutoff, coeffs)

    def write(self):
        """Get a json object. Zero terms are omitted."""
        obj = {
            'kind': self.KIND,
            'cutoff': self.cutoff,
            'cutoff_mu': str(self.seq.cutoff),
            'terms': [{'mu': str(mu), 'field': f.write()}
                      for mu, f in zip(self.seq.mus, self.fields) if not f.is_zero()],
        }
        if self.seq.gammas:
            obj['gammas'] = [str(g) for g in self.seq.gammas]
        else:
            obj['mus'] = [str(mu) for mu in self.seq.mus]
        return obj

    @classmethod
    def read(cls, obj, strict=False):
        """Read a json object."""
        validate(isinstance(obj, dict) and 'cutoff_mu' in obj, 'Expansion object needs "cutoff_mu".')
        if 'gammas' in obj:
            seq = generate_semigroup(obj['gammas'], obj['cutoff_mu'])
        elif 'mus' in obj:
            seq = ExponentSequence(obj['mus'], cutoff=obj['cutoff_mu'])
        else:
            raise ValidationError('Expansion object needs "gammas" or "mus".')
        terms = obj.get('terms', [])
        fields_by_n = {}
        for term in terms:
            n = seq.index_of(term['mu'])
            if n is None:
                raise ValidationError(f'Exponent is not in the generated sequence. ({term["mu"]})')
            fields_by_n[n] = SpectralField.read(term['field'], strict=strict)
        cutoff = obj.get('cutoff')
        if cutoff is None:
            cutoff = max([f.cutoff for f in fields_by_n.values()], default=1)
        validate(all(f.cutoff <= cutoff for f in fields_by_n.values()),
                 f'Term cutoff exceeds the expansion cutoff. ({cutoff})')
        fields = [fields_by_n.get(n, SpectralField.zeros(cutoff)) for n in range(1, len(seq) + 1)]
        return cls(seq, fields, cutoff=cutoff)

    def save(self, file):
        """Save as a json file."""
        io.save_json(file, self.write())

    @classmethod
    def load(cls, file, strict=False, verbose=False):
        """Load a json file."""
        if verbose:
            print('Loading ' + file + '...')
        return cls.read(io.load_json(file), strict=strict)

    def print(self, p=None, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        p = p if p is not None else GevreyParams()
        print(pad + f'{self.KIND}: {len(self)} terms, cutoff {self.cutoff}')
        for mu, norm in zip(self.seq.mus, self.norms(p)):
            print(pad + f'  mu={mu}: |.|_{p.alpha},{p.sigma} = {norm:.6e}')


class ForceExpansion(Expansion):
    """Force terms phi_n."""

    KIND = 'force'

    @property
    def phis(self):
        """Get force terms."""
        return self.fields

    @staticmethod
    def from_psis(gammas, psis, cutoff_mu, cutoff=None):
        """Place psi_k at the gamma_k positions. Other terms are zero."""
        validate(len(psis) == len(gammas), 'Number of psis should match the gammas.')
        seq = generate_semigroup(gammas, cutoff_mu)
        if cutoff is None:
            cutoff = max(psi.cutoff for psi in psis)
        fields = [SpectralField.zeros(cutoff) for _ in range(len(seq))]
        for gamma, psi in zip(seq.gammas, psis):
            fields[seq.index_of(gamma) - 1] = psi
        return ForceExpansion(seq, fields, cutoff=cutoff)


class SolutionExpansion(Expansion):
    """Solution terms xi_n."""

    KIND = 'solution'

    @property
    def xis(self):
        """Get solution terms."""
        return self.fields


def _b_sum(seq, n, xis, cutoff):
    total = 0
    for k, m in pair_decompositions(seq, n):
        if not (np.any(xis[k - 1]) and np.any(xis[m - 1])):
            continue
        total = total + bilinear_coeffs(xis[k - 1], cutoff, xis[m - 1], cutoff, cutoff)
    return total


def _chi(seq, n, xis):
    p = shift_predecessor(seq, n)
    if p is None:
        return 0
    return float(seq.mu(p)) * xis[p - 1]


def forward_recursion(force, cutoff=None):
    """Get the solution expansion of a force expansion.

    Args:
        force (ForceExpansion): force terms
        cutoff (int): working cutoff of the bilinear products. The force cutoff if None.

    Returns:
        sol (SolutionExpansion): xi_n for every exponent of the force
    """
    cutoff = force.cutoff if cutoff is None else int(cutoff)
    seq = force.seq
    k2 = get_modes(cutoff).k2[:, None].astype(float)
    phis = [phi.at_cutoff(cutoff).coeffs for phi in force.phis]
    xis = []
    for n in range(1, len(seq) + 1):
        rhs = phis[n - 1] + _chi(seq, n, xis) - _b_sum(seq, n, xis, cutoff)
        xis.append(rhs / k2)
    return SolutionExpansion(seq, [SpectralField(cutoff, xi) for xi in xis], cutoff=cutoff)


def inverse_recursion(sol, cutoff=None):
    """Get the force expansion that produces a solution expansion."""
    cutoff = sol.cutoff if cutoff is None else int(cutoff)
    seq = sol.seq
    k2 = get_modes(cutoff).k2[:, None].astype(float)
    xis = [xi.at_cutoff(cutoff).coeffs for xi in sol.xis]
    phis = []
    for n in range(1, len(seq) + 1):
        phi = k2 * xis[n - 1] - _chi(seq, n, xis) + _b_sum(seq, n, xis, cutoff)
        phis.append(SpectralField(cutoff, phi))
    return ForceExpansion(seq, phis, cutoff=cutoff)


class CoefficientBounds:
    """Coefficient bounds c_n and d_n = max{c_k c_{n-k}: 1 <= k <= n-1}.

    Notes:
        Index n is stored at position n-1. d_1 is a max over an empty set, stored as 0.
    """

    def __init__(self, cs):
        """Constructor."""
        cs = np.asarray(cs, dtype=float)
        validate(cs.ndim == 1 and len(cs) > 0, 'Coefficient bounds should be a non-empty list.')
        validate(bool(np.all(cs >= 0)), 'Coefficient bounds should be non-negative.')
        self.cs = cs
        ds = np.zeros_like(cs)
        for n in range(2, len(cs) + 1):
            ds[n - 1] = np.max(cs[:n - 1] * cs[n - 2::-1])
        self.ds = ds

    def d(self, n):
        """Get d_n."""
        return float(self.ds[n - 1])


class SummabilityVerdict:
    """Partial sums of sum n d_n and a convergence flag for the finite prefix."""

    CONVERGENT = 'convergent'
    DIVERGENT = 'divergent'
    INCONCLUSIVE = 'inconclusive'

    def __init__(self, partial_sums, flag, tail_slope=None, majorant_holds=None, majorant_ratio=None,
                 hypothesis_holds=None):
        """Constructor."""
        self.partial_sums = partial_sums
        self.flag = flag
        self.tail_slope = tail_slope
        self.majorant_holds = majorant_holds
        self.majorant_ratio = majorant_ratio
        self.hypothesis_holds = hypothesis_holds

    def write(self):
        """Get a json object."""
        return {
            'partial_sums': [float(s) for s in self.partial_sums],
            'flag': self.flag,
            'tail_slope': self.tail_slope,
            'majorant_holds': self.majorant_holds,
            'majorant_ratio': self.majorant_ratio,
            'hypothesis_holds': self.hypothesis_holds,
        }


def _tail_flag(terms):
    """Classify sum_{n>=2} n d_n from its prefix."""
    positive = np.nonzero(terms > 0)[0]
    if len(positive) == 0:
        return SummabilityVerdict.CONVERGENT, None
    if positive[-1] < len(terms) - max(3, len(terms) // 4):
        return SummabilityVerdict.CONVERGENT, None
    tail = positive[positive >= len(terms) // 2]
    if len(tail) < 4:
        return SummabilityVerdict.INCONCLUSIVE, None
    ns = tail + 2.0
    slope = float(np.polyfit(np.log(ns), np.log(terms[tail]), 1)[0])
    if slope < -1.1:
        return SummabilityVerdict.CONVERGENT, slope
    if slope > -0.9:
        return SummabilityVerdict.DIVERGENT, slope
    return SummabilityVerdict.INCONCLUSIVE, slope


def check_summability(cs, majorant=None):
    """Compute d_n, partial sums of n d_n and a convergence verdict.

    Args:
        cs (list): c_1, c_2, ... (non-negative)
        majorant (tuple): optional (M, lam, n0). Checks c_n <= M n^{-lam} for n >= n0
            and d_n <= 2^lam max(c) M n^{-lam} for n >= 2 n0.

    Returns:
        bounds (CoefficientBounds): c_n and d_n
        verdict (SummabilityVerdict): partial sums and flags
    """
    bounds = CoefficientBounds(cs)
    ns = np.arange(1, len(bounds.cs) + 1, dtype=float)
    terms = (ns * bounds.ds)[1:]
    partial_sums = np.cumsum(terms)
    flag, slope = _tail_flag(terms)

    holds = ratio = hypothesis = None
    if majorant is not None:
        big_m, lam, n0 = majorant
        validate(lam > 0 and big_m > 0 and n0 >= 1, f'Invalid majorant. ({majorant})')
        hyp = ns >= n0
        hypothesis = bool(np.all(bounds.cs[hyp] <= big_m * ns[hyp] ** (-lam) * (1 + 1e-12)))
        sel = ns >= 2 * n0
        limit = 2.0 ** lam * float(np.max(bounds.cs)) * big_m * ns[sel] ** (-lam)
        if np.any(sel):
            ratio = float(np.max(bounds.ds[sel] / limit)) if np.all(limit > 0) else 0.0
            holds = bool(np.all(bounds.ds[sel] <= limit * (1 + 1e-12)))
        else:
            ratio, holds = 0.0, True
    verdict = SummabilityVerdict(partial_sums, flag, tail_slope=slope, majorant_holds=holds,
                                 majorant_ratio=ratio, hypothesis_holds=hypothesis)
    return bounds, verdict


class ConstructedForce:
    """Force built from prescribed coefficients, with its bound chain."""

    def __init__(self, force, p, k_hat, zeta_norms, phi_norms, bounds, verdict, chain, roundtrip_error):
        """Constructor."""
        self.force = force
        self.p = p
        self.k_hat = k_hat
        self.zeta_norms = zeta_norms
        self.phi_norms = phi_norms
        self.bounds = bounds
        self.verdict = verdict
        self.chain = chain
        self.chain_holds = [phi <= bound * (1 + 1e-12) + 1e-300 for phi, bound in zip(phi_norms, chain)]
        self.roundtrip_error = roundtrip_error

    def support(self):
        """Get indices n with nonzero phi_n."""
        return [n for n, phi in enumerate(self.force.phis, start=1) if not phi.is_zero()]

    def write(self):
        """Get a json object for reports."""
        return {
            'gevrey': self.p.write(),
            'k_hat': self.k_hat,
            'zeta_norms': self.zeta_norms,
            'phi_norms': self.phi_norms,
            'ds': [float(d) for d in self.bounds.ds],
            'bound_chain': self.chain,
            'bound_holds': self.chain_holds,
            'support': self.support(),
            'roundtrip_error': self.roundtrip_error,
            'summability': self.verdict.write(),
        }

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'K_hat: {self.k_hat}, gevrey: {self.p}')
        print(pad + f'support: {self.support()}')
        print(pad + f'round trip error: {self.roundtrip_error:.3e}')
        print(pad + f'summability: {self.verdict.flag}')
        for n, (phi, bound, ok) in enumerate(zip(self.phi_norms, self.chain, self.chain_holds), start=1):
            print(pad + f'  n={n}: |phi|={phi:.6e} <= {bound:.6e} {"ok" if ok else "FAILED"}')


def relative_error(actual, expected):
    """Get max_n |actual_n - expected_n| / max_n |expected_n| in L2."""
    scale = max(f.norm() for f in expected.fields)
    diff = max((a - e).norm() for a, e in zip(actual.fields, expected.fields))
    if scale == 0:
        return diff
    return diff / scale


def construct_admissible_force(zetas, p, k_hat=2.0, cutoff=None):
    """Build the force whose solution expansion is the prescribed one (mu_n = n).

    Args:
        zetas (SolutionExpansion): prescribed coefficients zeta_n
        p (GevreyParams): working space, alpha >= 1/2
        k_hat (float): stand-in for the bilinear constant K
        cutoff (int): working cutoff of the bilinear products

    Returns:
        constructed (ConstructedForce): force, norms, bound chain and round trip check
    """
    validate(zetas.seq.is_integer(), 'Force construction needs mu_n = n.')
    validate(p.alpha >= to_fraction('1/2'), f'Alpha should be at least 1/2. ({p.alpha})')
    cutoff = zetas.cutoff if cutoff is None else int(cutoff)
    zetas = zetas.at_cutoff(cutoff)

    zeta_norms = zetas.norms(p.shifted(1))
    for n, c in enumerate(zeta_norms, start=1):
        if not math.isfinite(c):
            raise RuntimeError(f'Coefficient norm is not finite. (n={n})')

    force = inverse_recursion(zetas, cutoff=cutoff)
    phi_norms = force.norms(p)
    bounds, verdict = check_summability(zeta_norms)

    k_alpha = float(k_hat) ** float(p.alpha)
    chain = []
    for n in range(1, len(zeta_norms) + 1):
        bound = zeta_norms[n - 1]
        if n >= 2:
            bound += (n - 1) * zeta_norms[n - 2] + k_alpha * (n - 1) * bounds.d(n)
        chain.append(bound)

    back = forward_recursion(force, cutoff=cutoff)
    error = relative_error(back, zetas)
    return ConstructedForce(force, p, float(k_hat), zeta_norms, phi_norms, bounds, verdict, chain, error)


def regularity_chain(force, sol, p, k_hat=2.0):
    """Check |A xi_n| <= |phi_n| + |chi_n| + sum |B(xi_k, xi_m)| at (alpha, sigma).

    Returns:
        rows (list): one dict per n with both sides and the bilinear-bound checks
    """
    cutoff = sol.cutoff
    seq = sol.seq
    half = p.shifted('1/2')
    k_alpha = float(k_hat) ** float(p.alpha)
    xis = [xi.coeffs for xi in sol.xis]
    rows = []
    for n in range(1, len(seq) + 1):
        lhs = gevrey_norm(SpectralField(cutoff, get_modes(cutoff).k2[:, None] * xis[n - 1]), p)
        chi = _chi(seq, n, xis)
        rhs = gevrey_norm(force.term(n).at_cutoff(cutoff), p)
        rhs += gevrey_norm(SpectralField(cutoff, chi + np.zeros_like(xis[0])), p)
        b_ok = True
        for k, m in pair_decompositions(seq, n):
            b_norm = gevrey_norm(SpectralField(cutoff, bilinear_coeffs(xis[k - 1], cutoff, xis[m - 1],
                                                                       cutoff, cutoff)), p)
            rhs += b_norm
            limit = k_alpha * gevrey_norm(sol.term(k), half) * gevrey_norm(sol.term(m), half)
            b_ok = b_ok and b_norm <= limit * (1 + 1e-12) + 1e-300
        rows.append({'n': n, 'lhs': lhs, 'rhs': rhs, 'holds': lhs <= rhs * (1 + 1e-12) + 1e-300,
                     'bilinear_bound_holds': b_ok})
    return rows


class SeriesDiagnostics:
    """Term norms, root test and growth flags of a series prefix."""

    def __init__(self, t, norms, term_norms, roots, t1, divergent, factorial_normalized):
        """Constructor."""
        self.t = t
        self.norms = norms
        self.term_norms = term_norms
        self.roots = roots
        self.t1 = t1
        self.divergent = divergent
        self.factorial_normalized = factorial_normalized

    def write(self):
        """Get a json object."""
        return {
            't': self.t,
            'norms': self.norms,
            'term_norms': self.term_norms,
            'root_test': self.roots,
            'T1': self.t1,
            'divergent': self.divergent,
            'factorial_normalized': self.factorial_normalized,
        }


def _super_geometric(norms, tail=3):
    """Check that the ratios r_n = |x_{n+1}|/|x_n| grow at least like sqrt(n) over the last tail steps.

    Geometric growth has constant ratios and never fires. (n-1)! has r_{n+1}/r_n = 1 + 1/n.
    """
    if len(norms) < tail + 2 or min(norms[-tail - 2:]) <= 0:
        return False
    ratios = [nxt / prev for prev, nxt in zip(norms[-tail - 2:], norms[-tail - 1:])]
    start = len(norms) - tail - 1
    for i, (prev, nxt) in enumerate(zip(ratios, ratios[1:])):
        if nxt / prev < 1 + 1 / (2 * (start + i)):
            return False
    return True


def evaluate_series(exp, t, p=None, warn=True):
    """Sum a series at time t and diagnose its growth.

    Args:
        exp (Expansion): solution or force expansion
        t (float): time, positive
        p (GevreyParams): working space. Solution terms are measured at (alpha+1, sigma).
        warn (bool): emit SeriesWarning for super-geometric prefixes

    Returns:
        value (SpectralField): sum of all terms at t
        diagnostics (SeriesDiagnostics): norms, root test, T1 and divergence flag
    """
    validate(t > 0, f'Time should be positive. ({t})')
    p = p if p is not None else GevreyParams()
    norm_p = p.shifted(1) if isinstance(exp, SolutionExpansion) else p
    mus = exp.mu_values()
    norms = exp.norms(norm_p)
    term_norms = [float(c * t ** (-mu)) for c, mu in zip(norms, mus)]
    roots = [float(c ** (1.0 / mu)) if c > 0 else 0.0 for c, mu in zip(norms, mus)]

    nonzero = [i for i, c in enumerate(norms) if c > 0]
    if nonzero:
        last = nonzero[-1] + 1
        start = max(0, last - max(1, last // 3))
        t1 = float(max(roots[start:last]))
    else:
        t1 = 0.0
    divergent = _super_geometric(norms)
    if divergent and warn:
        warnings.warn('Series coefficients grow super-geometrically. The expansion looks divergent.',
                      SeriesWarning)
    factorial_normalized = [float(c / math.gamma(mu)) for c, mu in zip(norms, mus)]
    value = exp.partial_sum(t)
    return value, SeriesDiagnostics(float(t), norms, term_norms, roots, t1, divergent, factorial_normalized)
