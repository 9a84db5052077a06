"""Centered Gaussian with diagonal covariance ``c_1 >= c_2 >= ...`` decaying
like ``c[i+1] <= c[i] / i**alpha`` (alpha > 5/2), truncated to its first
``n`` coordinates."""

from dataclasses import dataclass, field
from fractions import Fraction
import numbers

import numpy as np
from scipy.special import ndtr

from .exceptions import BadAlpha, BadDimension, DecayViolation, GridTooLarge
from .measure import DiscreteMeasure, GridSpec

MIN_ALPHA = 2.5
DEFAULT_DIM_MAX = 8
MAX_GRID_CELLS = 2 ** 22
UINT64_MAX = 2 ** 64 - 1


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, numbers.Integral):
        return Fraction(int(x))
    return Fraction(float(x))


def _decay_ok(c, alpha_decay):
    """Exact check on rationals when possible, zero-tolerance float otherwise."""
    integral_alpha = float(alpha_decay).is_integer()
    for i in range(1, len(c)):
        # c is 0-based here: c[i] is the (i+1)-th variance, divided by i**alpha
        if integral_alpha:
            lhs = _as_fraction(c[i])
            rhs = _as_fraction(c[i - 1]) / Fraction(i) ** int(alpha_decay)
            if lhs > rhs:
                return i
        elif float(c[i]) > float(c[i - 1]) / float(i) ** float(alpha_decay):
            return i
    return 0


@dataclass(frozen=True)
class CovarianceSpec:
    """Variances of the coordinates together with the decay exponent.

    Build instances with :func:`build_covariance`; the constructor re-checks
    the decay inequality and positivity.
    """

    c: tuple
    alpha_decay: float
    dim_max: int
    exact: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.alpha_decay > MIN_ALPHA:
            raise BadAlpha(f"alpha_decay must exceed 5/2, got {self.alpha_decay}")
        if self.dim_max < 1 or len(self.c) != self.dim_max:
            raise BadDimension("need one variance per coordinate up to dim_max")
        values = self.exact if self.exact is not None else self.c
        if any(not (float(v) > 0 and np.isfinite(float(v))) for v in values):
            raise ValueError("variances must be finite and strictly positive")
        bad = _decay_ok(values, self.alpha_decay)
        if bad:
            raise DecayViolation(
                f"c[{bad + 1}] = {float(values[bad])!r} exceeds c[{bad}] / {bad}**{self.alpha_decay}"
            )

    @property
    def variances(self):
        return np.asarray(self.c, dtype=float)

    def to_dict(self):
        return {"c": [float(v) for v in self.c], "alpha": float(self.alpha_decay)}


def build_covariance(c1=1.0, alpha_decay=3.0, dim_max=DEFAULT_DIM_MAX, mode="equality", sequence=None):
    """Covariance sequence obeying the decay condition.

    Parameters
    ----------
    c1 : float
        First variance (equality mode).
    alpha_decay : float
        Decay exponent, strictly greater than 5/2.
    dim_max : int
        Number of coordinates kept.
    mode : {'equality', 'custom'}
        'equality' sets ``c[i+1] = c[i] / i**alpha_decay``; 'custom' checks
        the user-supplied ``sequence``.

    Examples
    --------
    >>> build_covariance(1, 3, 4).c
    (1.0, 1.0, 0.125, 0.004629629629629629)
    """
    if not alpha_decay > MIN_ALPHA:
        raise BadAlpha(f"alpha_decay must exceed 5/2, got {alpha_decay}")
    if mode in ("custom", "custom-sequence"):
        if sequence is None:
            raise ValueError("custom mode needs a sequence")
        seq = list(sequence)
        if not seq or any(not (float(v) > 0) for v in seq):
            raise ValueError("custom sequence must be nonempty and positive")
        return CovarianceSpec(tuple(float(v) for v in seq), float(alpha_decay), len(seq))
    if mode != "equality":
        raise ValueError(f"unknown mode {mode!r}")
    dim_max = int(dim_max)
    if dim_max < 1:
        raise BadDimension("dim_max must be at least 1")
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    if float(alpha_decay).is_integer():
        vals = [_as_fraction(c1)]
        for i in range(1, dim_max):
            vals.append(vals[-1] / Fraction(i) ** int(alpha_decay))
        exact = tuple(vals)
        c = tuple(float(v) for v in vals)
    else:
        c = [float(c1)]
        for i in range(1, dim_max):
            c.append(c[-1] / float(i) ** float(alpha_decay))
        exact, c = None, tuple(c)
    return CovarianceSpec(c, float(alpha_decay), dim_max, exact=exact)


@dataclass(frozen=True)
class TruncatedGaussian:
    """Product of centered normals ``N(0, c_i)``, ``i = 1..n``."""

    spec: CovarianceSpec
    n: int

    def __post_init__(self):
        if not 1 <= self.n <= self.spec.dim_max:
            raise BadDimension(f"active dimension {self.n} outside 1..{self.spec.dim_max}")

    @property
    def variances(self):
        return self.spec.variances[: self.n]

    @property
    def std(self):
        return np.sqrt(self.variances)

    def log_density(self, X):
        X = np.atleast_2d(X)
        c = self.variances
        return -0.5 * np.sum(X * X / c, axis=-1) - 0.5 * self.n * np.log(2 * np.pi) - 0.5 * np.sum(np.log(c))


def _check_seed(seed):
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (numbers.Integral, np.integer)):
        raise TypeError("seed must be an integer")
    if not 0 <= int(seed) <= UINT64_MAX:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return int(seed)


def sample(g, count, seed):
    """``count`` i.i.d. draws, shape (count, n); same seed, same draws."""
    if int(count) < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(_check_seed(seed))
    return rng.standard_normal((int(count), g.n)) * g.std


def interval_prob(lo, hi):
    """Standard normal mass of ``[lo, hi]``, accurate in both tails."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    right = lo > 0
    return np.where(right, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def axis_masses(edges, variance):
    """Unnormalised Gaussian cell masses along one axis."""
    z = np.asarray(edges, float) / np.sqrt(variance)
    return interval_prob(z[:-1], z[1:])


def axis_second_moments(edges, variance):
    """``E[x^2 / variance | x in cell]`` for each cell along one axis."""
    z = np.asarray(edges, float) / np.sqrt(variance)
    lo, hi = z[:-1], z[1:]
    p = interval_prob(lo, hi)
    phi = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    flux = hi * phi[1:] - lo * phi[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m2 = 1.0 - flux / p
    # cells beyond double precision: fall back to the squared center
    mid = 0.5 * (lo + hi)
    return np.where(p > 0, m2, mid * mid + (hi - lo) ** 2 / 12.0)


def gaussian_cell_masses(g, grid, normalize=True):
    """Cell masses of ``g`` on ``grid`` from exact CDF differences."""
    if grid.dim != g.n:
        raise BadDimension(f"grid has {grid.dim} axes, Gaussian {g.n}")
    mass = np.ones(())
    for e, c in zip(grid.edges, g.variances):
        mass = np.multiply.outer(mass, axis_masses(e, c))
    if normalize:
        mass = mass / mass.sum()
    return mass


def gaussian_grid(g, cells_per_axis, half_width_sigmas):
    """Uniform grid on ``[-w sqrt(c_i), w sqrt(c_i)]`` per axis."""
    if int(cells_per_axis) < 2:
        raise ValueError("cells_per_axis must be at least 2")
    if not half_width_sigmas > 0:
        raise ValueError("half_width_sigmas must be positive")
    half = half_width_sigmas * g.std
    return GridSpec.uniform(-half, half, int(cells_per_axis))


def grid_discretize(g, cells_per_axis, half_width_sigmas, max_cells=MAX_GRID_CELLS):
    """Grid-form stand-in for ``g`` with CDF-exact, renormalised cell masses."""
    if int(cells_per_axis) < 2:
        raise ValueError("cells_per_axis must be at least 2")
    if int(cells_per_axis) ** g.n > max_cells:
        raise GridTooLarge(f"{cells_per_axis}**{g.n} cells exceed the cap {max_cells}")
    grid = gaussian_grid(g, cells_per_axis, half_width_sigmas)
    return DiscreteMeasure.from_grid(grid, gaussian_cell_masses(g, grid))


def project(m, k):
    """Pushforward under the projection onto the first ``k`` coordinates."""
    k = int(k)
    if not 1 <= k <= m.dim:
        raise BadDimension(f"cannot project dimension {m.dim} onto {k}")
    if k == m.dim:
        return m
    if m.form == "atoms":
        return DiscreteMeasure("atoms", points=m.points[:, :k], masses=m.masses).coalesce()
    axes = tuple(range(k, m.dim))
    return DiscreteMeasure.from_grid(m.grid.marginal(k), m.masses.sum(axis=axes))
