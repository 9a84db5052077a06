"""Displacement interpolation of transport plans and relative entropy of the
interpolants with respect to a truncated Gaussian, on a declared grid.

Atomic measures have infinite entropy against a Gaussian, so every entropy
here is taken after snapping onto a grid: the snapped measure is read as the
measure whose density with respect to the (box-restricted) Gaussian is
constant on each cell. With that reading

    Ent_gamma = Ent_Lebesgue + V + log_normalizer

holds exactly, where ``V`` is half the mean of ``x^T C^-1 x`` and
``log_normalizer = d/2 log(2 pi) + 1/2 sum log c_i + log Z_box``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import EntropyUndefined, IncompatibleGrid
from .gaussian_model import axis_masses, axis_second_moments
from .measure import DiscreteMeasure, GridSpec
from .transport_lp import solve_exact

DEFAULT_TS = (0.25, 0.5, 0.75)
CONVEXITY_SLACK = 1e-3
GEODESIC_RTOL = 1e-6
GEODESIC_PAIRS = ((0.0, 1.0), (0.0, 0.5), (0.5, 1.0), (0.25, 0.75))
QUADRATURE_NODES = 32


def interpolate(plan, t):
    """Pushforward of ``plan`` under ``(x, y) -> (1 - t) x + t y``.

    One atom per plan entry, coincident atoms merged.

    Examples
    --------
    >>> plan, _ = solve_exact(DiscreteMeasure.from_atoms([0., 1.]),
    ...                       DiscreteMeasure.from_atoms([1., 2.]))
    >>> interpolate(plan, 0.5).points.ravel()
    array([0.5, 1.5])
    """
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    x = plan.source_points[plan.rows]
    y = plan.target_points[plan.cols]
    pts = (1.0 - t) * x + t * y
    mass = plan.mass / plan.mass.sum()
    return DiscreteMeasure("atoms", points=pts, masses=mass).coalesce()


def covering_grid(measures, width, pad=0):
    """Uniform grid of cell ``width`` whose cell centers sit on the lowest
    atom along each axis.

    Atoms on a lattice of spacing ``k * width`` aligned with that atom land
    exactly on cell centers, so snapping is unambiguous.
    """
    pts = np.vstack([m.atoms()[0] for m in measures])
    width = np.broadcast_to(np.asarray(width, float), (pts.shape[1],))
    lo = pts.min(axis=0) - (0.5 + pad) * width
    cells = np.ceil((pts.max(axis=0) - pts.min(axis=0)) / width - 1e-9).astype(int) + 1 + 2 * pad
    return GridSpec([lo[i] + width[i] * np.arange(cells[i] + 1) for i in range(pts.shape[1])])


def snap_to_grid(m, grid):
    """Cell masses of ``m`` on ``grid`` (nearest cell, mass preserving)."""
    if m.form == "grid":
        if not m.grid.same_as(grid):
            raise IncompatibleGrid("grid measure lives on a different grid")
        return np.array(m.masses)
    return grid.snap(m.points, m.masses)


@dataclass
class EntropyReading:
    """Entropy terms of one measure on one grid.

    ``ent_gamma = ent_lebesgue + second_moment_half + log_normalizer``; for
    unit variances and an unbounded box ``log_normalizer`` reduces to
    ``dim / 2 * log(2 pi)``.
    """

    ent_gamma: float
    ent_lebesgue: float
    second_moment_half: float
    log_normalizer: float
    dim: int
    grid_shape: tuple = ()

    @property
    def residual(self):
        return self.ent_gamma - (self.ent_lebesgue + self.second_moment_half + self.log_normalizer)

    def to_dict(self):
        return {"ent_gamma": self.ent_gamma, "ent_lebesgue": self.ent_lebesgue,
                "second_moment_half": self.second_moment_half,
                "log_normalizer": self.log_normalizer, "dim": self.dim,
                "grid_shape": list(self.grid_shape)}


def _outer(vectors):
    out = np.ones(())
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


def _axis_quadrature(edges, variance, nodes=QUADRATURE_NODES):
    """Per-cell ``int phi`` and ``int phi log phi`` by Gauss-Legendre."""
    z, w = leggauss(nodes)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * z + 0.5 * (hi + lo)
    wx = 0.5 * (hi - lo) * w
    logphi = -0.5 * x * x / variance - 0.5 * np.log(2 * np.pi * variance)
    phi = np.exp(logphi)
    return np.sum(wx * phi, axis=1), np.sum(wx * phi * logphi, axis=1)


def entropy_relative(m, g, grid=None):
    """Relative entropy of ``m`` with respect to ``g`` after snapping to ``grid``.

    Parameters
    ----------
    m : DiscreteMeasure
    g : TruncatedGaussian
    grid : GridSpec, optional
        Defaults to the grid of ``m`` for grid-form measures.

    Returns
    -------
    EntropyReading
        ``ent_gamma`` is ``sum p log(p / gamma_k)`` with ``gamma_k`` the
        renormalised Gaussian cell masses; ``ent_lebesgue`` is integrated
        independently by per-cell quadrature; cells with ``p = 0`` count 0.
    """
    if grid is None:
        if m.form != "grid":
            raise IncompatibleGrid("atomic measures need an explicit grid")
        grid = m.grid
    if grid.dim != g.n or m.dim != g.n:
        raise IncompatibleGrid(f"measure dim {m.dim}, grid dim {grid.dim}, Gaussian dim {g.n}")
    p = snap_to_grid(m, grid)

    axis_mass = [axis_masses(e, c) for e, c in zip(grid.edges, g.variances)]
    axis_total = np.array([a.sum() for a in axis_mass])
    pos = p > 0
    if np.any(axis_total <= 0):
        # the whole box is beyond double precision
        inf = float("inf")
        return EntropyReading(inf, inf, float("nan"), inf, g.n, grid.shape)
    gamma = _outer([a / t for a, t in zip(axis_mass, axis_total)])
    log_z = float(np.sum(np.log(axis_total)))
    log_norm = 0.5 * g.n * np.log(2 * np.pi) + 0.5 * float(np.sum(np.log(g.variances))) + log_z

    if np.any(gamma[pos] <= 0):
        inf = float("inf")
        return EntropyReading(inf, inf, float("nan"), log_norm, g.n, grid.shape)
    ratio = np.ones_like(p)
    ratio[pos] = p[pos] / gamma[pos]
    ent_gamma = float(np.sum(p[pos] * np.log(ratio[pos])))

    # V from exact truncated second moments, axis by axis
    v = 0.0
    for axis, (e, c) in enumerate(zip(grid.edges, g.variances)):
        marginal = p.sum(axis=tuple(k for k in range(g.n) if k != axis))
        v += float(marginal @ axis_second_moments(e, c))
    v *= 0.5

    quad = [_axis_quadrature(e, c) for e, c in zip(grid.edges, g.variances)]
    q = [qa for qa, _ in quad]
    s = np.zeros(grid.shape)
    for axis in range(g.n):
        s += _outer([quad[k][1] if k == axis else q[k] for k in range(g.n)])
    qk = _outer(q)
    ent_l = float(np.sum(ratio[pos] * np.exp(-log_z)
                         * (qk[pos] * (np.log(ratio[pos]) - log_z) + s[pos])))
    return EntropyReading(ent_gamma, ent_l, v, float(log_norm), g.n, grid.shape)


@dataclass
class InterpolationPath:
    """Interpolants of one plan at several ``t``, with their entropies.

    ``atoms[k]`` is the exact pushforward at ``ts[k]``; ``measures[k]`` its
    snapped grid version and ``entropies[k]`` its reading.
    """

    plan: object
    ts: list
    atoms: list
    measures: list
    entropies: list = field(default_factory=list)
    grid: GridSpec = None

    def index(self, t, atol=1e-12):
        hits = [k for k, s in enumerate(self.ts) if abs(s - t) <= atol]
        if not hits:
            raise KeyError(f"t={t} is not on the path")
        return hits[0]

    def ent_gamma(self):
        return np.array([r.ent_gamma for r in self.entropies])


def build_path(plan, g=None, grid=None, ts=DEFAULT_TS):
    """Interpolate ``plan`` at ``0``, ``ts`` and ``1``.

    With a Gaussian ``g`` and a ``grid`` the interpolants are also snapped
    and their entropies read; otherwise only the atoms are kept.
    """
    ts = sorted({0.0, 1.0, *(float(t) for t in ts)})
    atoms = [interpolate(plan, t) for t in ts]
    if g is None or grid is None:
        return InterpolationPath(plan, ts, atoms, [], [], None)
    measures = [DiscreteMeasure.from_grid(grid, snap_to_grid(a, grid) / a.masses.sum()) for a in atoms]
    entropies = [entropy_relative(m, g) for m in measures]
    return InterpolationPath(plan, ts, atoms, measures, entropies, grid)


def convexity_defect(t, mode, w1, alpha_cost=None, epsilon=None):
    """Quadratic term ``K(t)`` subtracted from the chord.

    ``mode='w1'``: ``t (1 - t) / 2 * W1^2``.
    ``mode='c_epsilon'``: ``t (1 - t) / (2 (1 + eps)^2) * (W_eps - eps)^2``
    with ``W_eps = w1 + eps * alpha_cost``.
    """
    if mode == "w1":
        return 0.5 * t * (1 - t) * w1 ** 2
    if mode == "c_epsilon":
        if epsilon is None or not epsilon > 0:
            raise ValueError("c_epsilon mode needs epsilon > 0")
        w_eps = w1 + epsilon * alpha_cost
        return t * (1 - t) / (2 * (1 + epsilon) ** 2) * (w_eps - epsilon) ** 2
    raise ValueError(f"unknown convexity mode {mode!r}")


@dataclass
class ConvexityReport:
    mode: str
    epsilon: float
    slack: float
    rows: list
    grid_shape: tuple

    @property
    def passed(self):
        return all(r["margin"] >= -self.slack for r in self.rows)

    @property
    def worst_margin(self):
        return min((r["margin"] for r in self.rows), default=float("inf"))

    def to_dict(self):
        return {"mode": self.mode, "epsilon": self.epsilon, "slack": self.slack,
                "grid_shape": list(self.grid_shape), "passed": self.passed, "rows": self.rows}


def check_convexity(path, mode="w1", epsilon=None, slack=CONVEXITY_SLACK):
    """Check ``Ent(rho_t) <= (1-t) Ent(rho_0) + t Ent(rho_1) - K(t)`` on the path.

    The transport costs in ``K`` are the plan's own integrals. Each row is
    ``{t, ent_gamma, bound, margin}`` with ``margin = bound - ent_gamma``;
    the check passes when every margin is at least ``-slack``.
    """
    ent = path.ent_gamma()
    e0, e1 = ent[path.index(0.0)], ent[path.index(1.0)]
    if not (np.isfinite(e0) and np.isfinite(e1)):
        raise EntropyUndefined("endpoint entropy is infinite on this grid")
    if mode == "c_epsilon" and epsilon is None:
        epsilon = path.plan.epsilon
    w1, alpha_cost = path.plan.w1_cost(), path.plan.alpha_cost()
    rows = []
    for t, e in zip(path.ts, ent):
        if t in (0.0, 1.0):
            continue
        bound = (1 - t) * e0 + t * e1 - convexity_defect(t, mode, w1, alpha_cost, epsilon)
        rows.append({"t": t, "ent_gamma": float(e), "bound": float(bound), "margin": float(bound - e)})
    return ConvexityReport(mode, float(epsilon or 0.0), float(slack), rows, path.grid.shape)


def refinement_delta(coarse, fine):
    """Largest change of ``ent_gamma`` between two paths at matching ``t``."""
    return max(abs(fine.entropies[fine.index(t)].ent_gamma - r.ent_gamma)
               for t, r in zip(coarse.ts, coarse.entropies))


def geodesic_check(path, pairs=GEODESIC_PAIRS, rtol=GEODESIC_RTOL):
    """``W1(rho_t, rho_s) = |t - s| W1(rho_0, rho_1)`` on the exact interpolants.

    Returns a list of rows ``{t, s, w1, expected, rel_error, passed}``.
    """
    if len(path.ts) < 3:
        raise ValueError("need at least three points on the path")
    w01 = path.plan.w1_cost()
    rows = []
    for t, s in pairs:
        a, b = path.atoms[path.index(t)], path.atoms[path.index(s)]
        plan, _ = solve_exact(a, b)
        expected = abs(t - s) * w01
        err = abs(plan.value - expected) / max(expected, 1e-300) if expected > 0 else abs(plan.value)
        rows.append({"t": t, "s": s, "w1": plan.value, "expected": expected,
                     "rel_error": err, "passed": err <= rtol})
    return rows
