"""Truncated Fourier fields on the 2pi-torus and the spectral operators acting on them.

Notes:
    A field with cutoff L stores one coefficient vector per +-k pair with 0 < |k|^2 <= L.
    The stored member is the lexicographically positive one of {k, -k}.
    The other coefficient is its complex conjugate, so every field is real.
    Modes are sorted by |k|^2 first. A field at a smaller cutoff is a prefix of a larger one.

    The L2 norm is the l2 norm of the coefficients over both members of each pair.
"""
import functools
import itertools
import math
import warnings
from fractions import Fraction

import numpy as np

from .util import io_util as io
from .util.errors import IngestWarning, ValidationError, validate

DIV_TOLERANCE = 1e-12


def to_fraction(value):
    """Convert int, float, string or Fraction to a reduced Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f'Not a rational number. ({value})') from exc
    raise ValidationError(f'Not a rational number. ({value})')


def is_canonical(ks):
    """Check if wave vectors are in the stored half-space."""
    ks = np.asarray(ks)
    k1, k2, k3 = ks[..., 0], ks[..., 1], ks[..., 2]
    return (k1 > 0) | ((k1 == 0) & (k2 > 0)) | ((k1 == 0) & (k2 == 0) & (k3 > 0))


class ModeSet:
    """Half-space wave vectors with 0 < |k|^2 <= cutoff."""

    def __init__(self, cutoff):
        """Constructor."""
        r = math.isqrt(cutoff)
        axis = np.arange(-r, r + 1)
        grid = np.array(list(itertools.product(axis, repeat=3)), dtype=np.int64).reshape(-1, 3)
        k2 = (grid ** 2).sum(axis=1)
        keep = (k2 > 0) & (k2 <= cutoff) & is_canonical(grid)
        ks = grid[keep]
        k2 = k2[keep]
        order = np.lexsort((ks[:, 2], ks[:, 1], ks[:, 0], k2))

        self.cutoff = cutoff
        self.ks = ks[order]
        self.k2 = k2[order]
        self.kabs = np.sqrt(self.k2)
        self.kf = self.ks.astype(float)
        self.size = len(self.ks)
        self.full_ks = np.concatenate([self.ks, -self.ks])
        self.index = {tuple(int(c) for c in k): i for i, k in enumerate(self.ks)}
        for ary in [self.ks, self.k2, self.kabs, self.kf, self.full_ks]:
            ary.setflags(write=False)

    def locate(self, k):
        """Get the stored index of k and whether k is the conjugate member."""
        key = tuple(int(c) for c in k)
        if key in self.index:
            return self.index[key], False
        neg = tuple(-c for c in key)
        if neg in self.index:
            return self.index[neg], True
        return None, False


@functools.lru_cache(maxsize=None)
def _mode_set(cutoff):
    return ModeSet(cutoff)


def get_modes(cutoff):
    """Get the (cached) mode set of a cutoff."""
    validate(isinstance(cutoff, (int, np.integer)) and not isinstance(cutoff, bool) and cutoff >= 1,
             f'Cutoff should be a positive integer. ({cutoff})')
    return _mode_set(int(cutoff))


class GevreyParams:
    """Sobolev exponent alpha and Gevrey radius sigma."""

    def __init__(self, alpha=Fraction(1, 2), sigma=0.0):
        """Constructor."""
        self.alpha = to_fraction(alpha)
        self.sigma = float(sigma)
        validate(self.sigma >= 0, f'Sigma should be non-negative. ({sigma})')

    def shifted(self, d_alpha):
        """Get (alpha + d_alpha, sigma)."""
        return GevreyParams(self.alpha + to_fraction(d_alpha), self.sigma)

    def weights(self, modes):
        """Get |k|^{4 alpha} e^{2 sigma |k|} per mode."""
        return np.power(modes.k2.astype(float), 2 * float(self.alpha)) * np.exp(2 * self.sigma * modes.kabs)

    def __eq__(self, other):
        """Equal operator."""
        return isinstance(other, GevreyParams) and (self.alpha, self.sigma) == (other.alpha, other.sigma)

    def __hash__(self):
        """Hash."""
        return hash((self.alpha, self.sigma))

    def __repr__(self):
        """To string."""
        return f'GevreyParams(alpha={self.alpha}, sigma={self.sigma})'

    def write(self):
        """Get a json object."""
        return {'alpha': str(self.alpha), 'sigma': self.sigma}

    @staticmethod
    def read(obj):
        """Read a json object."""
        return GevreyParams(obj.get('alpha', '1/2'), obj.get('sigma', 0.0))


class SpectralField:
    """Real divergence-free zero-mean vector field truncated at |k|^2 <= cutoff.

    Notes:
        The constructor trusts its coefficients.
        Use from_modes() or read() for outside data. They check the divergence.
        Fields are immutable values.
    """

    # numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def __init__(self, cutoff, coeffs=None):
        """Constructor."""
        self.modes = get_modes(cutoff)
        if coeffs is None:
            coeffs = np.zeros((self.modes.size, 3), dtype=complex)
        else:
            coeffs = np.array(coeffs, dtype=complex)
            io.check(coeffs.shape, (self.modes.size, 3),
                     msg=f'Coefficient shape does not match the cutoff. ({cutoff})')
        coeffs.setflags(write=False)
        self.coeffs = coeffs

    @property
    def cutoff(self):
        """Get cutoff."""
        return self.modes.cutoff

    @staticmethod
    def zeros(cutoff):
        """Get a zero field."""
        return SpectralField(cutoff)

    @staticmethod
    def from_modes(cutoff, entries, strict=False):
        """Make a field from (k, vector) pairs.

        Args:
            cutoff (int): spectral cutoff
            entries (iterable or dict): wave vectors and complex 3-vectors.
                A negative-half k stores the conjugate at -k.
            strict (bool): raise instead of projecting non-solenoidal data

        Returns:
            field (SpectralField): the field
        """
        modes = get_modes(cutoff)
        if isinstance(entries, dict):
            entries = entries.items()
        coeffs = np.zeros((modes.size, 3), dtype=complex)
        for k, vec in entries:
            vec = np.asarray(vec, dtype=complex)
            validate(len(k) == 3 and vec.shape == (3,), f'Invalid mode entry. ({k})')
            k2 = sum(int(c) ** 2 for c in k)
            validate(k2 > 0, 'Zero mode is not allowed.')
            validate(k2 <= modes.cutoff, f'Wave vector exceeds the cutoff. ({list(k)}, {modes.cutoff})')
            i, conj = modes.locate(k)
            coeffs[i] = vec.conj() if conj else vec

        div = np.abs(np.einsum('ij,ij->i', coeffs, modes.kf))
        bad = div > DIV_TOLERANCE * np.linalg.norm(coeffs, axis=1)
        if np.any(bad):
            msg = f'Field is not divergence-free at {int(bad.sum())} modes.'
            if strict:
                raise ValidationError(msg)
            warnings.warn(msg + ' Projected.', IngestWarning)
            coeffs = project_coeffs(coeffs, modes)
        return SpectralField(cutoff, coeffs)

    def full(self):
        """Get coefficients of both members of each pair (stored first, then conjugates)."""
        return np.concatenate([self.coeffs, self.coeffs.conj()])

    def at_cutoff(self, cutoff):
        """Zero-pad or truncate to another cutoff."""
        modes = get_modes(cutoff)
        if modes.size >= self.modes.size:
            coeffs = np.zeros((modes.size, 3), dtype=complex)
            coeffs[:self.modes.size] = self.coeffs
        else:
            coeffs = self.coeffs[:modes.size]
        return SpectralField(cutoff, coeffs)

    def _pair(self, other):
        cutoff = max(self.cutoff, other.cutoff)
        return self.at_cutoff(cutoff).coeffs, other.at_cutoff(cutoff).coeffs, cutoff

    def __add__(self, other):
        """Add."""
        a, b, cutoff = self._pair(other)
        return SpectralField(cutoff, a + b)

    def __sub__(self, other):
        """Subtract."""
        a, b, cutoff = self._pair(other)
        return SpectralField(cutoff, a - b)

    def __neg__(self):
        """Negate."""
        return SpectralField(self.cutoff, -self.coeffs)

    def __mul__(self, x):
        """Multiply by a real number."""
        if isinstance(x, (complex, np.complexfloating)):
            raise ValidationError('Fields can only be scaled by real numbers.')
        return SpectralField(self.cutoff, self.coeffs * float(x))

    __rmul__ = __mul__

    def __truediv__(self, x):
        """Divide by a real number."""
        return self * (1.0 / float(x))

    def norm(self, p=None):
        """Get the Gevrey norm. (L2 norm by default.)"""
        return gevrey_norm(self, p if p is not None else GevreyParams(0, 0))

    def inner(self, other):
        """Get the real L2 inner product."""
        a, b, _ = self._pair(other)
        return float(2.0 * np.real(np.sum(a * b.conj())))

    def is_zero(self):
        """Check if all coefficients are 0."""
        return not np.any(self.coeffs)

    def write(self):
        """Get a json object. Only nonzero modes are listed."""
        modes = []
        for i in np.nonzero(np.any(self.coeffs != 0, axis=1))[0]:
            c = self.coeffs[i]
            modes.append({
                'k': [int(x) for x in self.modes.ks[i]],
                're': [float(x) for x in c.real],
                'im': [float(x) for x in c.imag],
            })
        return {'cutoff': self.cutoff, 'modes': modes}

    @staticmethod
    def read(obj, strict=False):
        """Read a json object."""
        validate(isinstance(obj, dict) and 'cutoff' in obj, 'Field object needs "cutoff".')
        entries = []
        for m in obj.get('modes', []):
            validate({'k', 're', 'im'} <= set(m), f'Mode entry needs k, re and im. ({m})')
            entries.append((m['k'], np.asarray(m['re'], dtype=float) + 1j * np.asarray(m['im'], dtype=float)))
        return SpectralField.from_modes(obj['cutoff'], entries, strict=strict)

    def save(self, file):
        """Save as a json file."""
        io.save_json(file, self.write())

    @staticmethod
    def load(file, strict=False, verbose=False):
        """Load a json file."""
        if verbose:
            print('Loading ' + file + '...')
        return SpectralField.read(io.load_json(file), strict=strict)

    def print(self, padding=2):
        """Print meta data."""
        pad = ' ' * padding
        nonzero = int(np.count_nonzero(np.any(self.coeffs != 0, axis=1)))
        print(pad + f'cutoff: {self.cutoff}')
        print(pad + f'modes: {self.modes.size} ({nonzero} nonzero)')
        print(pad + f'L2 norm: {self.norm()}')


def gevrey_norm(u, p):
    """Get |u|_{alpha,sigma} = |A^alpha e^{sigma A^{1/2}} u|."""
    w = p.weights(u.modes)
    return float(np.sqrt(2.0 * np.sum(w * np.sum(np.abs(u.coeffs) ** 2, axis=1))))


def spectral_multiplier(u, a, s):
    """Multiply each coefficient by |k|^{2a} e^{s|k|}.

    Notes:
        a=-1, s=0 gives A^{-1}. a=1, s=0 gives A.
    """
    factor = np.power(u.modes.k2.astype(float), float(to_fraction(a))) * np.exp(float(s) * u.modes.kabs)
    return SpectralField(u.cutoff, u.coeffs * factor[:, None])


def heat_multiplier(u, a, tau):
    """Apply A^a e^{-tau A}."""
    k2 = u.modes.k2.astype(float)
    factor = np.power(k2, float(to_fraction(a))) * np.exp(-float(tau) * k2)
    return SpectralField(u.cutoff, u.coeffs * factor[:, None])


def apply_stokes(u):
    """Apply A."""
    return spectral_multiplier(u, 1, 0)


def apply_inverse_stokes(u):
    """Apply A^{-1}."""
    return spectral_multiplier(u, -1, 0)


def project_coeffs(coeffs, modes):
    """Apply I - kk^T/|k|^2 per mode to a coefficient array."""
    dot = np.einsum('ij,ij->i', coeffs, modes.kf)
    return coeffs - modes.kf * (dot / modes.k2)[:, None]


def leray_project(raw):
    """Project a (possibly non-solenoidal) field onto divergence-free fields."""
    return SpectralField(raw.cutoff, project_coeffs(raw.coeffs, raw.modes))


def divergence(u):
    """Get max_k |k . u(k)|."""
    if u.modes.size == 0:
        return 0.0
    return float(np.max(np.abs(np.einsum('ij,ij->i', u.coeffs, u.modes.kf))))


@functools.lru_cache(maxsize=None)
def triad_table(cut_u, cut_v, cut_out):
    """Get all triads m + n = k with m, n from the full mode sets and k a stored output mode.

    Returns:
        o_idx (numpy.ndarray): stored index of k in the output mode set
        a_idx (numpy.ndarray): index of m in the full (stored + conjugate) u modes
        b_idx (numpy.ndarray): index of n in the full v modes
        n_vec (numpy.ndarray): n as floats, shape (T, 3)
    """
    mu, mv, mo = _mode_set(cut_u), _mode_set(cut_v), _mode_set(cut_out)
    off = 2 * math.isqrt(max(cut_u, cut_v, cut_out))
    width = 2 * off + 1

    def encode(ks):
        return ((ks[..., 0] + off) * width + (ks[..., 1] + off)) * width + (ks[..., 2] + off)

    out_keys = encode(mo.ks)
    order = np.argsort(out_keys)
    sorted_keys = out_keys[order]

    sums = mu.full_ks[:, None, :] + mv.full_ks[None, :, :]
    keys = encode(sums).ravel()
    pos = np.minimum(np.searchsorted(sorted_keys, keys), len(sorted_keys) - 1)
    hit = sorted_keys[pos] == keys

    a_idx, b_idx = np.divmod(np.nonzero(hit)[0], mv.full_ks.shape[0])
    o_idx = order[pos[hit]]
    n_vec = mv.full_ks[b_idx].astype(float)
    for ary in [o_idx, a_idx, b_idx, n_vec]:
        ary.setflags(write=False)
    return o_idx, a_idx, b_idx, n_vec


def bilinear_coeffs(cu, cut_u, cv, cut_v, cut_out):
    """Get coefficients of P((u.grad) v) truncated at cut_out.

    Args:
        cu (numpy.ndarray): stored coefficients of u
        cut_u (int): cutoff of u
        cv (numpy.ndarray): stored coefficients of v
        cut_v (int): cutoff of v
        cut_out (int): output cutoff

    Returns:
        coeffs (numpy.ndarray): stored coefficients of B(u, v)
    """
    o_idx, a_idx, b_idx, n_vec = triad_table(cut_u, cut_v, cut_out)
    modes = _mode_set(cut_out)
    out = np.zeros((modes.size, 3), dtype=complex)
    if len(o_idx) == 0:
        return out
    uf = np.concatenate([cu, cu.conj()])
    vf = np.concatenate([cv, cv.conj()])
    weight = 1j * np.einsum('ij,ij->i', uf[a_idx], n_vec)
    contrib = weight[:, None] * vf[b_idx]
    for c in range(3):
        out[:, c] = (np.bincount(o_idx, weights=contrib[:, c].real, minlength=modes.size)
                     + 1j * np.bincount(o_idx, weights=contrib[:, c].imag, minlength=modes.size))
    return project_coeffs(out, modes)


def bilinear_B(u, v, cutoff_out=None):
    """Get B(u, v) = P((u.grad) v) as an exact convolution truncated at cutoff_out."""
    if cutoff_out is None:
        cutoff_out = max(u.cutoff, v.cutoff)
    get_modes(cutoff_out)
    coeffs = bilinear_coeffs(u.coeffs, u.cutoff, v.coeffs, v.cutoff, int(cutoff_out))
    return SpectralField(cutoff_out, coeffs)


def eigen_projection(u, n, kind='P'):
    """Apply R_n (keep |k|^2 = n) or P_n (keep |k|^2 <= n)."""
    validate(n >= 1, f'Eigen index should be positive. ({n})')
    if kind == 'R':
        mask = u.modes.k2 == n
    elif kind == 'P':
        mask = u.modes.k2 <= n
    else:
        raise ValidationError(f'Unsupported projection kind. ({kind})')
    return SpectralField(u.cutoff, u.coeffs * mask[:, None])


def power_profile(amplitude=1.0, slope=0.0, max_k2=None):
    """Get a spectrum profile amplitude * |k|^{-2 slope}, zero above max_k2."""
    def profile(k2):
        amp = amplitude * np.power(k2, -float(slope))
        if max_k2 is not None:
            amp = np.where(k2 <= max_k2, amp, 0.0)
        return amp
    return profile


def random_solenoidal_field(seed, cutoff, profile=None):
    """Make a random divergence-free field.

    Args:
        seed (int or numpy.random.Generator): seed or a generator to draw from
        cutoff (int): spectral cutoff
        profile (callable): maps |k|^2 (float array) to amplitude scales. Flat if None.

    Returns:
        field (SpectralField): the field
    """
    modes = get_modes(cutoff)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    raw = rng.standard_normal((modes.size, 3)) + 1j * rng.standard_normal((modes.size, 3))
    if profile is not None:
        amp = np.broadcast_to(np.asarray(profile(modes.k2.astype(float)), dtype=float), (modes.size,))
        raw = raw * amp[:, None]
    return SpectralField(cutoff, project_coeffs(raw, modes))
