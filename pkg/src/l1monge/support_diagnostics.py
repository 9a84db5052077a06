"""Checks on the support of transport plans.

Cyclical monotonicity, potential slackness, the gradient-monotonicity
inequality on collinear configurations, map-likeness (each source sent to a
single target), inverse-image ball queries and a Monte Carlo estimate of the
local density ratio of inverse images.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree

from .costs import CostSpec, cost_matrix, grad_alpha, pairwise_distance
from .exceptions import InsufficientSamples

EXHAUSTIVE_LIMIT = 500
CYCLE_SAMPLES = 100_000
POTENTIAL_TOL = 1e-7
LIPSCHITZ_TOL = 1e-9
COLLINEAR_RTOL = 1e-8
MIN_ACCEPTANCE = 1e-4


@dataclass
class SupportSet:
    """Pairs ``(x_k, y_k)`` with mass ``mass_k``, one per plan entry.

    ``rows`` and ``cols`` index into the plan's atoms when built with
    :meth:`from_plan`.
    """

    sources: np.ndarray
    targets: np.ndarray
    mass: np.ndarray
    rows: np.ndarray = None
    cols: np.ndarray = None

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, float))
        self.targets = np.atleast_2d(np.asarray(self.targets, float))
        self.mass = np.asarray(self.mass, float)
        if not (self.sources.shape == self.targets.shape and self.mass.shape == (len(self.sources),)):
            raise ValueError("need one source, one target and one mass per pair")

    @classmethod
    def from_plan(cls, plan):
        return cls(plan.source_points[plan.rows], plan.target_points[plan.cols],
                   plan.mass.copy(), plan.rows.copy(), plan.cols.copy())

    @classmethod
    def from_pairs(cls, pairs):
        """From an iterable of ``(x, y, mass)``."""
        xs, ys, w = zip(*pairs)
        xs = np.array([np.atleast_1d(x) for x in xs], float)
        ys = np.array([np.atleast_1d(y) for y in ys], float)
        return cls(xs, ys, np.array(w, float))

    def __len__(self):
        return self.mass.size

    @property
    def dim(self):
        return self.sources.shape[1]


@dataclass
class CheckReport:
    """Outcome of one support check; ``worst`` is the largest violation."""

    name: str
    passed: bool
    worst: float
    tol: float
    witness: object = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        witness = self.witness
        if isinstance(witness, np.ndarray):
            witness = witness.tolist()
        return {"check": self.name, "passed": bool(self.passed), "worst": float(self.worst),
                "tol": float(self.tol), "witness": witness, **self.details}


def _cycle_excess(diag, C, cycle):
    """``sum c(x_i, y_i) - sum c(x_i, y_{i+1})`` for index arrays ``cycle``."""
    nxt = np.roll(cycle, -1, axis=-1)
    return diag[cycle].sum(axis=-1) - C[cycle, nxt].sum(axis=-1)


def check_cyclical_monotonicity(s, spec=None, max_cycle=3, tol=None, samples=CYCLE_SAMPLES, seed=0):
    """Worst gain from cyclically reassigning targets along the support.

    Cycles of length 2 and (if ``max_cycle == 3``) 3 are scanned
    exhaustively for up to 500 pairs; beyond that ``samples`` random cycles
    per length are drawn with ``seed``. The default tolerance is
    ``1e-9 * max |c|`` over the support.
    """
    spec = spec or CostSpec()
    if max_cycle not in (2, 3):
        raise ValueError("max_cycle must be 2 or 3")
    k = len(s)
    C = cost_matrix(spec, s.sources, s.targets)
    scale = max(1.0, float(np.abs(C).max(initial=0.0)))
    tol = 1e-9 * scale if tol is None else tol
    diag = np.diag(C).copy()
    worst, witness = 0.0, None
    exhaustive = k <= EXHAUSTIVE_LIMIT
    if k >= 2:
        if exhaustive:
            V2 = diag[:, None] + diag[None, :] - C - C.T
            i, j = np.unravel_index(np.argmax(V2), V2.shape)
            if V2[i, j] > worst:
                worst, witness = float(V2[i, j]), (int(i), int(j))
            if max_cycle == 3 and k >= 3:
                for l in range(k):
                    # cycle i -> j -> l -> i
                    V3 = diag[:, None] + diag[None, :] + diag[l] - C - C[:, l][None, :] - C[l, :][:, None]
                    i, j = np.unravel_index(np.argmax(V3), V3.shape)
                    if V3[i, j] > worst and len({i, j, l}) == 3:
                        worst, witness = float(V3[i, j]), (int(i), int(j), int(l))
        else:
            rng = np.random.default_rng(seed)
            for length in range(2, max_cycle + 1):
                cyc = np.array([rng.choice(k, length, replace=False) for _ in range(samples)])
                ex = _cycle_excess(diag, C, cyc)
                b = int(np.argmax(ex))
                if ex[b] > worst:
                    worst, witness = float(ex[b]), tuple(int(v) for v in cyc[b])
    return CheckReport("cyclical_monotonicity", worst <= tol, worst, tol, witness,
                       {"cost_kind": spec.kind, "max_cycle": max_cycle, "pairs": k,
                        "mode": "exhaustive" if exhaustive else f"sampled({samples})"})


def _potential_values(s, u):
    if s.rows is not None and u.u_source.size and s.rows.max(initial=-1) < u.u_source.size:
        if np.array_equal(u.source_points[s.rows], s.sources) and np.array_equal(u.target_points[s.cols], s.targets):
            return u.u_source[s.rows], u.u_target[s.cols]
    return np.array([u(x) for x in s.sources]), np.array([u(y) for y in s.targets])


def check_potential(s, u, tol=POTENTIAL_TOL, lipschitz_tol=LIPSCHITZ_TOL):
    """``u(x) - u(y) = |x - y|`` on the support and ``u`` 1-Lipschitz.

    The Lipschitz bound is checked on every pair of points where ``u`` is
    known. Raises ``MissingValue`` if ``u`` is undefined at a support point.
    """
    ux, uy = _potential_values(s, u)
    gap = np.abs(ux - uy - np.linalg.norm(s.sources - s.targets, axis=1))
    k = int(np.argmax(gap)) if gap.size else -1
    worst_eq = float(gap[k]) if gap.size else 0.0

    pts, vals = u.pooled()
    worst_lip, lip_witness = 0.0, None
    for start in range(0, len(pts), 1024):
        D = pairwise_distance(pts[start:start + 1024], pts)
        excess = np.abs(vals[start:start + 1024, None] - vals[None, :]) - D
        i, j = np.unravel_index(np.argmax(excess), excess.shape)
        if excess[i, j] > worst_lip:
            worst_lip, lip_witness = float(excess[i, j]), (int(start + i), int(j))
    passed = worst_eq <= tol and worst_lip <= lipschitz_tol
    return CheckReport("potential", passed, max(worst_eq, worst_lip), tol,
                       k if worst_eq > tol else None,
                       {"worst_equality_gap": worst_eq, "worst_lipschitz_excess": worst_lip,
                        "lipschitz_tol": lipschitz_tol, "lipschitz_witness": lip_witness})


def _segment_distance(p, a, b):
    """Distance from points ``p`` to segments ``[a, b]`` (broadcasting)."""
    ab = b - a
    L2 = np.sum(ab * ab, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, np.sum((p - a) * ab, axis=-1) / L2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def check_hsupopt(s, tol=1e-9, collinear_rtol=COLLINEAR_RTOL):
    """Gradient inequality for pairs with ``x`` on the segment ``[x', y']``.

    For support pairs ``(x, y)`` and ``(x', y')`` with ``x`` within
    ``collinear_rtol * |y' - x'|`` of the segment ``[x', y']``, checks

        (grad_alpha(y - x') - grad_alpha(y' - x), x - x') >= -tol.

    A check with no qualifying configuration passes and is flagged vacuous.
    """
    k = len(s)
    X, Y = s.sources, s.targets
    premises, worst, witness = 0, 0.0, None
    for start in range(0, k, 512):
        xi = X[start:start + 512, None, :]
        xp, yp = X[None, :, :], Y[None, :, :]
        on = _segment_distance(xi, xp, yp) <= collinear_rtol * np.linalg.norm(yp - xp, axis=-1)
        idx = np.arange(start, min(start + 512, k))
        on[idx - start, idx] = False
        if not on.any():
            continue
        a, b = np.nonzero(on)
        lhs = np.sum((grad_alpha(Y[start + a] - X[b]) - grad_alpha(Y[b] - X[start + a]))
                     * (X[start + a] - X[b]), axis=1)
        premises += a.size
        c = int(np.argmin(lhs))
        if -lhs[c] > worst:
            worst, witness = float(-lhs[c]), (int(start + a[c]), int(b[c]))
    return CheckReport("hsupopt", worst <= tol, worst, tol, witness,
                       {"premises": premises, "vacuous": premises == 0})


def _clusters(points, tol):
    """Labels grouping points that coincide (``tol == 0``) or chain within ``tol``."""
    if tol <= 0:
        _, labels = np.unique(points, axis=0, return_inverse=True)
        return np.ravel(labels)
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    k = len(points)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(k, k))
    return connected_components(adj, directed=False)[1]


@dataclass
class GraphnessReport:
    """Whether each source point of a support goes to a single target."""

    split_sources: int
    max_target_spread: float
    witness: tuple = None
    splitting_inequality: float = None
    sign_condition: float = None
    source_labels: np.ndarray = field(default=None, repr=False)

    @property
    def is_map(self):
        return self.split_sources == 0

    def to_dict(self):
        w = None
        if self.witness is not None:
            w = [[list(map(float, x)), list(map(float, y))] for x, y in self.witness]
        return {"split_sources": self.split_sources, "max_target_spread": self.max_target_spread,
                "witness": w, "splitting_inequality": self.splitting_inequality,
                "sign_condition": self.sign_condition}


def graphness(s, merge_tol=0.0):
    """Count source points whose pairs reach two or more distinct targets.

    Source (and target) points closer than ``merge_tol`` are identified.
    For the first split source the two targets ``y0, y1`` farthest apart
    form the witness, and two quantities are evaluated on it:
    ``((y1 - x0) - (y0 - x0)) . (grad_alpha(y1 - x0) - grad_alpha(y0 - x0))``,
    positive whenever ``y0 != y1``, and
    ``(grad_alpha(y0 - x0) - grad_alpha(y1 - x0)) . (y1 - x0)``.
    """
    if len(s) == 0:
        return GraphnessReport(0, 0.0)
    src_lab = _clusters(s.sources, merge_tol)
    tgt_lab = _clusters(s.targets, merge_tol)
    split, spread, witness = 0, 0.0, None
    for lab in np.unique(src_lab):
        members = np.flatnonzero(src_lab == lab)
        if np.unique(tgt_lab[members]).size < 2:
            continue
        split += 1
        ys = s.targets[members]
        D = pairwise_distance(ys, ys)
        i, j = np.unravel_index(np.argmax(D), D.shape)
        if D[i, j] > spread:
            spread = float(D[i, j])
        if witness is None:
            x0 = s.sources[members[0]]
            witness = ((x0, ys[i]), (x0, ys[j]))
    splitting = sign = None
    if witness is not None:
        (x0, y0), (_, y1) = witness
        g0, g1 = grad_alpha(y0 - x0), grad_alpha(y1 - x0)
        splitting = float(np.dot((y1 - x0) - (y0 - x0), g1 - g0))
        sign = float(np.dot(g0 - g1, y1 - x0))
    return GraphnessReport(split, spread, witness, splitting, sign, src_lab)


def induced_map(s):
    """Map ``source point -> target point`` of a split-free support.

    Returns ``(sources, targets, masses)`` with one row per distinct source,
    masses summed over that source's pairs.
    """
    rep = graphness(s)
    if not rep.is_map:
        raise ValueError(f"{rep.split_sources} source points have several targets")
    _, first, inv = np.unique(s.sources, axis=0, return_index=True, return_inverse=True)
    inv = np.ravel(inv)
    w = np.bincount(inv, s.mass)
    return s.sources[first], s.targets[first], w


def support_from_map(sources, targets, masses):
    """Support of the plan ``(id, T)_# mu`` for the map ``sources -> targets``."""
    return SupportSet(sources, targets, masses)


def gamma_inverse_query(s, y, r):
    """Source points of pairs whose target lies in the closed ball ``B(y, r)``.

    Points are returned once each, in order of first appearance.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    y = np.atleast_1d(np.asarray(y, float))
    hit = np.linalg.norm(s.targets - y, axis=1) <= r
    pts = s.sources[hit]
    if pts.size == 0:
        return pts.reshape(0, s.dim)
    _, first = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(first)]


def nearest_source_membership(s, y, r):
    """Surrogate membership test for the inverse image of ``B(y, r)``.

    A point belongs when its nearest support source point has some pair
    whose target lies in the closed ball.
    """
    y = np.atleast_1d(np.asarray(y, float))
    uniq, inv = np.unique(s.sources, axis=0, return_inverse=True)
    inv = np.ravel(inv)
    hit = np.zeros(len(uniq), dtype=bool)
    np.logical_or.at(hit, inv, np.linalg.norm(s.targets - y, axis=1) <= r)
    tree = cKDTree(uniq)

    def member(z):
        return hit[tree.query(z)[1]]

    return member


@dataclass
class RatioPoint:
    delta: float
    ratio: float
    stderr: float
    accepted: int
    acceptance_rate: float

    def to_dict(self):
        return {"delta": self.delta, "ratio": self.ratio, "stderr": self.stderr,
                "accepted": self.accepted, "acceptance_rate": self.acceptance_rate}


def _ball(rng, count, center, radius):
    d = center.size
    v = rng.standard_normal((count, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return center + radius * v * rng.random(count)[:, None] ** (1.0 / d)


def lebesgue_ratio_estimate(s, g, x, y, r, deltas, mc_samples=100_000, seed=0, membership=None):
    """Monte Carlo estimate of ``gamma(A ∩ B(x, delta)) / gamma(B(x, delta))``.

    ``A`` is the inverse image of the closed ball ``B(y, r)`` under the
    support, represented by ``membership`` (a vectorised predicate on
    points); by default the nearest-source surrogate of
    :func:`nearest_source_membership`. Points of ``g`` restricted to each
    ball are drawn by rejection from the uniform law on the ball, one
    independent stream per ``delta`` spawned from ``seed``.

    Returns
    -------
    list of RatioPoint
        Ratios with binomial standard errors ``sqrt(p (1 - p) / N)``.

    Raises
    ------
    InsufficientSamples
        If the rejection acceptance rate falls below ``1e-4``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    if x.size != g.n:
        raise ValueError(f"point has dimension {x.size}, Gaussian {g.n}")
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and decreasing")
    if membership is None:
        membership = nearest_source_membership(s, y, r)
    inv_var = 1.0 / g.variances
    streams = np.random.SeedSequence(int(seed)).spawn(len(deltas))
    out = []
    for delta, ss in zip(deltas, streams):
        rng = np.random.default_rng(ss)
        # lower bound of the quadratic form over the ball
        q_min = max(np.sqrt(x @ (inv_var * x)) - delta * np.sqrt(inv_var.max()), 0.0) ** 2
        accepted, proposed, raw, hits = 0, 0, 0, 0
        batch = max(mc_samples, 1024)
        while accepted < mc_samples:
            z = _ball(rng, batch, x, delta)
            q = np.sum(z * z * inv_var, axis=1)
            keep = rng.random(batch) < np.exp(-0.5 * (q - q_min))
            proposed += batch
            raw += int(np.count_nonzero(keep))
            if raw / proposed < MIN_ACCEPTANCE:
                raise InsufficientSamples(
                    f"acceptance rate {raw / proposed:.2e} below {MIN_ACCEPTANCE:g} at delta={delta}")
            z = z[keep][: mc_samples - accepted]
            accepted += len(z)
            hits += int(np.count_nonzero(membership(z)))
        p = hits / accepted
        out.append(RatioPoint(delta, p, float(np.sqrt(p * (1 - p) / accepted)), accepted, raw / proposed))
    return out
