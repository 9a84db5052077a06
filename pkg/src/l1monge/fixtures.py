"""Built-in instances used by the CLI, the tests and the acceptance suite."""

import numpy as np

from .gaussian_model import TruncatedGaussian, build_covariance, grid_discretize, sample
from .measure import DiscreteMeasure
from .transport_lp import TransportPlan

CATALOG = {
    "book-shift": "uniform {0,1,2,3} -> uniform {1,2,3,4}; many distance-optimal plans",
    "identity": "uniform {0,1,2,3} to itself",
    "gaussian-pair": "grid discretization of N(0, diag(c)) and its copy shifted along the first axis",
    "empirical-pair": "N uniform-weight samples of N(0, diag(c)) and of a shifted copy",
    "split-witness": "hand-built plan sending one source atom to two targets",
}


def fixtures():
    """Names and one-line descriptions of the built-in instances."""
    return dict(CATALOG)


def book_shift():
    src = DiscreteMeasure.from_atoms([0.0, 1.0, 2.0, 3.0])
    tgt = DiscreteMeasure.from_atoms([1.0, 2.0, 3.0, 4.0])
    return src, tgt


def identity():
    src = DiscreteMeasure.from_atoms([0.0, 1.0, 2.0, 3.0])
    return src, src


def gaussian_pair(dim=1, cells=None, half_width=4.0, shift_cells=None, covariance=None):
    """Discretized Gaussian and a copy translated by ``shift_cells`` cells.

    Both are returned as atoms at the cell centers of the Gaussian's grid,
    so the translation maps atoms onto atoms.

    Returns
    -------
    src, tgt : DiscreteMeasure
    gaussian : TruncatedGaussian
    cell_width : ndarray
        Cell width along each axis.
    """
    covariance = covariance or build_covariance()
    g = TruncatedGaussian(covariance, dim)
    if cells is None:
        cells = 64 if dim == 1 else 16
    if shift_cells is None:
        shift_cells = cells // 8
    m = grid_discretize(g, cells, half_width)
    width = np.array([w[0] for w in m.grid.axis_widths()])
    pts, w = m.atoms()
    shift = np.zeros(dim)
    shift[0] = shift_cells * width[0]
    return DiscreteMeasure.from_atoms(pts, w), DiscreteMeasure.from_atoms(pts + shift, w), g, width


def empirical_pair(dim=1, count=64, seed=0, shift=1.0, covariance=None):
    """Uniform-weight samples of ``g`` and of ``g`` shifted along the first axis.

    The two sample sets use independent streams spawned from ``seed``.
    """
    covariance = covariance or build_covariance()
    g = TruncatedGaussian(covariance, dim)
    s0, s1 = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)
    x = sample(g, count, int(s0))
    y = sample(g, count, int(s1))
    y[:, 0] += shift
    return DiscreteMeasure.from_atoms(x), DiscreteMeasure.from_atoms(y), g


def split_witness():
    """Plan moving the atom at the origin half to ``(1, 0)`` and half to ``(0, 1)``."""
    src = DiscreteMeasure.from_atoms([[0.0, 0.0]])
    tgt = DiscreteMeasure.from_atoms([[1.0, 0.0], [0.0, 1.0]])
    return TransportPlan.from_matrix([[0.5, 0.5]], src, tgt)


def load(name, **params):
    """Build the named fixture; measures come back as ``(src, tgt)`` pairs."""
    builders = {
        "book-shift": book_shift,
        "identity": identity,
        "gaussian-pair": gaussian_pair,
        "empirical-pair": empirical_pair,
        "split-witness": split_witness,
    }
    if name not in builders:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(builders)}")
    return builders[name](**params)
