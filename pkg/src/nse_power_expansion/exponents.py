"""Exact power exponents and the ordered semigroup they generate.

Notes:
    The set generated by gammas is every sum gamma_{n_1} + ... + gamma_{n_p} + k
    with p >= 1 and an integer k >= 0.
    Queries take 1-based indices so that n refers to mu_n.
"""
from fractions import Fraction

from .spectral import to_fraction
from .util.errors import ValidationError, validate


def parse_exponent(value):
    """Parse a positive exact exponent ("3/2", "1", "0.7", 2, Fraction)."""
    mu = to_fraction(value)
    validate(mu > 0, f'Exponents should be positive. ({value})')
    return mu


def parse_exponent_list(text):
    """Parse a comma separated list of exponents."""
    items = [s for s in str(text).replace(' ', '').split(',') if s != '']
    if len(items) == 0:
        raise ValidationError('Gammas should not be empty.')
    return [parse_exponent(s) for s in items]


def _strictly_increasing(values):
    return all(a < b for a, b in zip(values, values[1:]))


class ExponentSequence:
    """Strictly increasing exponents mu_1 < mu_2 < ... up to a cutoff."""

    GENERATED = 'generated'

    def __init__(self, mus, gammas=(), cutoff=None):
        """Constructor."""
        mus = [parse_exponent(m) for m in mus]
        validate(_strictly_increasing(mus),
                 f'Exponents should be strictly increasing. ({[str(m) for m in mus]})')
        self.mus = tuple(mus)
        self.gammas = tuple(parse_exponent(g) for g in gammas)
        if cutoff is None:
            cutoff = self.mus[-1] if self.mus else Fraction(0)
        self.cutoff = to_fraction(cutoff)
        self._index = {mu: i + 1 for i, mu in enumerate(self.mus)}

    def __len__(self):
        """Length."""
        return len(self.mus)

    def __iter__(self):
        """Iterate exponents."""
        return iter(self.mus)

    def mu(self, n):
        """Get mu_n (1-based)."""
        validate(1 <= n <= len(self.mus), f'Exponent index out of range. ({n})')
        return self.mus[n - 1]

    def index_of(self, mu):
        """Get n with mu_n == mu, or None."""
        return self._index.get(to_fraction(mu))

    def origin(self, n):
        """Get 'gamma(k)' if mu_n equals gamma_k, else 'generated'."""
        mu = self.mu(n)
        if mu in self.gammas:
            return f'gamma({self.gammas.index(mu) + 1})'
        return ExponentSequence.GENERATED

    def is_integer(self):
        """Check if mu_n = n for all n."""
        return all(mu == n for n, mu in enumerate(self.mus, start=1))

    def truncate(self, length):
        """Get the first length exponents."""
        mus = self.mus[:length]
        return ExponentSequence(mus, gammas=self.gammas, cutoff=mus[-1] if mus else Fraction(0))

    @staticmethod
    def integers(length):
        """Get mu_n = n for n <= length."""
        return generate_semigroup([1], length)

    def __eq__(self, other):
        """Equal operator."""
        return isinstance(other, ExponentSequence) and self.mus == other.mus

    def __hash__(self):
        """Hash."""
        return hash(self.mus)

    def write(self):
        """Get a json object."""
        return [{'mu': str(mu), 'origin': self.origin(n)} for n, mu in enumerate(self.mus, start=1)]

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        print(pad + f'gammas: {[str(g) for g in self.gammas]}')
        print(pad + f'cutoff: {self.cutoff}')
        print(pad + f'length: {len(self)}')
        for n, mu in enumerate(self.mus, start=1):
            print(pad + f'  mu_{n} = {mu} ({self.origin(n)})')


def generate_semigroup(gammas, cutoff):
    """Generate every sum of gammas plus a non-negative integer up to cutoff.

    Args:
        gammas (list): strictly increasing positive exponents
        cutoff (Fraction or str): the largest exponent kept

    Returns:
        seq (ExponentSequence): sorted exponents with origin flags
    """
    gammas = [parse_exponent(g) for g in gammas]
    if len(gammas) == 0:
        raise ValidationError('Gammas should not be empty.')
    validate(_strictly_increasing(gammas),
             f'Gammas should be strictly increasing. ({[str(g) for g in gammas]})')
    cutoff = to_fraction(cutoff)
    validate(cutoff >= gammas[-1], f'Cutoff should be at least the largest gamma. ({cutoff})')

    # breadth-first closure under +gamma_k and +1, seeded by single gammas
    steps = sorted(set(gammas) | {Fraction(1)})
    found = set(gammas)
    frontier = list(gammas)
    while frontier:
        new = []
        for s in frontier:
            for g in steps:
                t = s + g
                if t > cutoff:
                    break
                if t not in found:
                    found.add(t)
                    new.append(t)
        frontier = new
    return ExponentSequence(sorted(found), gammas=gammas, cutoff=cutoff)


def pair_decompositions(seq, n):
    """Get all ordered (k, m) with mu_k + mu_m = mu_n, both below n."""
    mu_n = seq.mu(n)
    pairs = []
    for k in range(1, n):
        m = seq.index_of(mu_n - seq.mus[k - 1])
        if m is not None and m < n:
            pairs.append((k, m))
    return pairs


def shift_predecessor(seq, n):
    """Get p with mu_p + 1 = mu_n, or None."""
    mu_n = seq.mu(n)
    if mu_n <= 1:
        return None
    p = seq.index_of(mu_n - 1)
    if p is not None and p < n:
        return p
    return None


def next_exponent(seq):
    """Get the least generated exponent above the sequence cutoff."""
    validate(len(seq.gammas) > 0, 'Sequence has no gammas.')
    extended = generate_semigroup(seq.gammas, seq.cutoff + 1)
    return next(mu for mu in extended if mu > seq.cutoff)


def epsilon_star(seq, n_star, delta=None):
    """Get the extra decay order of a finite expansion.

    Args:
        seq (ExponentSequence): exponents of the expansion
        n_star (int): number of exponents the force expansion is exact up to
        delta (Fraction): order of the force remainder beyond mu_{n_star}. None means no remainder.

    Returns:
        eps (Fraction): min{delta, mu_1, 1} if n_star == 1,
            else min{delta, mu_{N} - mu_{N-1}, mu_{N+1} - mu_{N}}
    """
    validate(1 <= n_star <= len(seq), f'N_* out of range. ({n_star})')
    if n_star == 1:
        candidates = [seq.mu(1), Fraction(1)]
    else:
        following = seq.mu(n_star + 1) if n_star < len(seq) else next_exponent(seq)
        candidates = [seq.mu(n_star) - seq.mu(n_star - 1), following - seq.mu(n_star)]
    if delta is not None:
        candidates.append(parse_exponent(delta))
    return min(candidates)
