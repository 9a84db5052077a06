"""Exact discrete Monge-Kantorovich solver with Kantorovich potentials."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from ._network_simplex import network_simplex
from .costs import CostSpec, alpha, cost_matrix, pairwise_distance
from .exceptions import Infeasible, MissingValue, NumericFailure, TooLarge
from .measure import DiscreteMeasure

#: plan entries at or below this mass (relative to the total) are dropped
ENTRY_TOL = 1e-14
MARGINAL_RTOL = 1e-9
DUALITY_RTOL = 1e-8


@dataclass
class TransportPlan:
    """Sparse coupling between two atomic measures.

    ``rows[k], cols[k], mass[k]`` is the k-th entry; ``source_points`` and
    ``target_points`` are the atoms the indices refer to.
    """

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    source_points: np.ndarray
    target_points: np.ndarray
    source_masses: np.ndarray
    target_masses: np.ndarray
    cost_kind: str = "distance"
    epsilon: float = 0.0
    value: float = float("nan")
    source_ref: str = ""
    target_ref: str = ""
    info: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_matrix(cls, P, src, tgt, spec=None, entry_tol=ENTRY_TOL, **kw):
        """Build from a dense plan matrix over the atoms of ``src`` and ``tgt``."""
        P = np.asarray(P, dtype=float)
        xs, a = src.atoms()
        ys, b = tgt.atoms()
        if P.shape != (a.size, b.size):
            raise ValueError("plan matrix does not match the atom counts")
        thresh = entry_tol * max(float(a.sum()), 1.0)
        r, c = np.nonzero(P > thresh)
        spec = spec or CostSpec()
        plan = cls(r, c, P[r, c], xs, ys, a, b, spec.kind, spec.epsilon,
                   source_ref=src.fingerprint(), target_ref=tgt.fingerprint(), **kw)
        plan.value = plan.integral(spec) if spec.kind != "beta_restricted" else plan.alpha_cost()
        return plan

    @property
    def entries(self):
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.mass)]

    def __len__(self):
        return self.mass.size

    def matrix(self):
        P = np.zeros((self.source_points.shape[0], self.target_points.shape[0]))
        np.add.at(P, (self.rows, self.cols), self.mass)
        return P

    def displacements(self):
        return self.target_points[self.cols] - self.source_points[self.rows]

    def w1_cost(self):
        d = self.displacements()
        return float(self.mass @ np.sqrt(np.sum(d * d, axis=1)))

    def alpha_cost(self):
        return float(self.mass @ alpha(self.displacements()))

    def integral(self, spec):
        """``sum mass * cost`` for a finite cost kind."""
        if spec.kind == "distance":
            return self.w1_cost()
        if spec.kind == "alpha":
            return self.alpha_cost()
        if spec.kind == "c_epsilon":
            return self.w1_cost() + spec.epsilon * self.alpha_cost()
        raise ValueError("the restricted cost has no standalone integral")

    def marginal_errors(self):
        """Largest relative deviation of row and column sums from the marginals."""
        P_rows = np.bincount(self.rows, self.mass, minlength=self.source_masses.size)
        P_cols = np.bincount(self.cols, self.mass, minlength=self.target_masses.size)
        scale = max(float(self.source_masses.sum()), 1e-300)
        return (float(np.abs(P_rows - self.source_masses).max()) / scale,
                float(np.abs(P_cols - self.target_masses).max()) / scale)

    def check_marginals(self, rtol=MARGINAL_RTOL):
        er, ec = self.marginal_errors()
        return er <= rtol and ec <= rtol and bool(np.all(self.mass > 0))

    def same_support(self, other, atol=1e-9):
        """Same entries with masses equal within ``atol``."""
        A, B = self.matrix(), other.matrix()
        if A.shape != B.shape:
            return False
        return bool(np.array_equal(A > atol, B > atol) and np.allclose(A, B, atol=atol, rtol=0))

    def is_permutation(self):
        n = self.source_points.shape[0]
        return (len(self) == n == self.target_points.shape[0]
                and np.unique(self.rows).size == n and np.unique(self.cols).size == n)


class KantorovichPotential:
    """Potential values on source and target atoms.

    Convention for every cost: ``u_source[i] - u_target[j] <= c(x_i, y_j)``,
    with equality on plan entries. For the distance cost the values come
    from one 1-Lipschitz function on the pooled points, normalised so the
    first source atom has value 0.
    """

    def __init__(self, source_points, target_points, u_source, u_target, lipschitz=False):
        self.source_points = np.atleast_2d(np.asarray(source_points, float))
        self.target_points = np.atleast_2d(np.asarray(target_points, float))
        self.u_source = np.asarray(u_source, float)
        self.u_target = np.asarray(u_target, float)
        self.lipschitz = lipschitz

    def pooled(self):
        return (np.vstack([self.source_points, self.target_points]),
                np.concatenate([self.u_source, self.u_target]))

    def __call__(self, p, atol=1e-12):
        pts, vals = self.pooled()
        p = np.atleast_1d(np.asarray(p, float))
        hit = np.flatnonzero(np.all(np.abs(pts - p) <= atol, axis=1))
        if hit.size == 0:
            raise MissingValue(f"potential undefined at {p.tolist()}")
        return float(vals[hit[0]])

    def with_value(self, index, value):
        """Copy with one pooled value replaced (sources first, then targets)."""
        us, ut = self.u_source.copy(), self.u_target.copy()
        if index < us.size:
            us[index] = value
        else:
            ut[index - us.size] = value
        return KantorovichPotential(self.source_points, self.target_points, us, ut, self.lipschitz)

    def to_dict(self):
        return {"u_source": self.u_source.tolist(), "u_target": self.u_target.tolist()}


def _check_balance(a, b):
    ta, tb = float(a.sum()), float(b.sum())
    if abs(ta - tb) > MARGINAL_RTOL * max(ta, tb):
        raise Infeasible(f"total masses differ: {ta!r} vs {tb!r}")


def lipschitz_potential(xs, ys, u_target):
    """Inf-convolution ``u(p) = min_j |p - y_j| + u_target[j]`` on sources and targets."""
    us = np.min(pairwise_distance(xs, ys) + u_target[None, :], axis=1)
    ut = np.min(pairwise_distance(ys, ys) + u_target[None, :], axis=1)
    return us, ut


def solve_exact(src, tgt, spec=None, potential=None, pivot="block", warm=None):
    """Optimal plan and potential for ``spec`` between two discrete measures.

    Parameters
    ----------
    src, tgt : DiscreteMeasure
        Grid measures are converted to atoms at their cell centers; zero-mass
        atoms are dropped.
    spec : CostSpec
        Defaults to the distance cost.
    potential : KantorovichPotential or (u_source, u_target), optional
        Required for the ``beta_restricted`` cost.
    pivot : {'block', 'dantzig', 'bland'}
        Network simplex entering rule.
    warm : TransportBasis, optional
        Basis of an earlier solve on the same measures.

    Returns
    -------
    plan : TransportPlan
    potential : KantorovichPotential

    Examples
    --------
    >>> src = DiscreteMeasure.from_atoms([0.0, 1.0, 2.0, 3.0])
    >>> tgt = DiscreteMeasure.from_atoms([1.0, 2.0, 3.0, 4.0])
    >>> plan, _ = solve_exact(src, tgt, CostSpec("alpha"))
    >>> round(plan.value, 12), plan.cols.tolist()
    (1.414213562373, [0, 1, 2, 3])
    """
    spec = spec or CostSpec()
    xs, a = src.atoms()
    ys, b = tgt.atoms()
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("measures live in different dimensions")
    _check_balance(a, b)
    C = cost_matrix(spec, xs, ys, potential)
    P, f, g, info = network_simplex(a, b, C, pivot=pivot, warm=warm)

    plan = TransportPlan.from_matrix(P, src, tgt, spec, info=info)
    primal = float(np.sum(P[P > 0] * C[P > 0]))
    dual = float(a @ f + b @ g)
    if abs(primal - dual) > DUALITY_RTOL * max(1.0, abs(primal)):
        raise NumericFailure(f"duality gap {primal - dual:.3e}")
    plan.info["dual_value"] = dual
    plan.info["primal_value"] = primal

    u_source, u_target = f, -g
    if spec.kind == "distance":
        u_source, u_target = lipschitz_potential(xs, ys, u_target)
    shift = u_source[0]
    pot = KantorovichPotential(xs, ys, u_source - shift, u_target - shift,
                               lipschitz=spec.kind == "distance")
    return plan, pot


def w1(src, tgt):
    """Wasserstein-1 distance between two discrete measures."""
    plan, _ = solve_exact(src, tgt, CostSpec("distance"))
    return plan.value


def coupling_constraints(m, n):
    """Sparse equality constraints ``P 1 = a``, ``P^T 1 = b`` on ``vec(P)``."""
    k = np.arange(m * n)
    rows = np.concatenate([k // n, m + k % n])
    cols = np.concatenate([k, k])
    return coo_matrix((np.ones(2 * m * n), (rows, cols)), shape=(m + n, m * n)).tocsr()


HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def highs_transport(a, b, C, A_ub=None, b_ub=None):
    """Reference LP solve with HiGHS; returns the dense plan and objective."""
    m, n = C.shape
    res = linprog(C.ravel(), A_ub=A_ub, b_ub=b_ub, A_eq=coupling_constraints(m, n),
                  b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs",
                  options=HIGHS_OPTIONS)
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status != 0:
        raise NumericFailure(res.message)
    P = np.clip(res.x.reshape(m, n), 0.0, None)
    return P, float(res.fun)


def _rank_of_support(arcs, m, n):
    """Rank of the coupling-constraint columns of ``arcs`` (nodes - components)."""
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    touched = set()
    for i, j in arcs:
        touched.update((i, m + j))
        ri, rj = find(i), find(m + j)
        if ri != rj:
            parent[ri] = rj
    components = len({find(v) for v in touched})
    return len(touched) - components


def optimal_face_dimension(src, tgt, spec=None, tol=1e-9, max_atoms=12):
    """Dimension of the set of optimal plans (0 means the optimum is unique).

    Arcs with zero reduced cost carry every optimal plan; each one is tested
    for positivity somewhere on the face with an LP, and the affine hull of
    the face has dimension ``#free arcs - rank``.
    """
    spec = spec or CostSpec()
    xs, a = src.atoms()
    ys, b = tgt.atoms()
    m, n = a.size, b.size
    if m > max_atoms or n > max_atoms:
        raise TooLarge(f"face enumeration limited to {max_atoms} atoms per side")
    _check_balance(a, b)
    C = cost_matrix(spec, xs, ys)
    _, f, g, _ = network_simplex(a, b, C)
    scale = max(1.0, float(np.abs(C[np.isfinite(C)]).max()))
    rc = C - f[:, None] - g[None, :]
    tight = np.argwhere(rc <= tol * scale)
    forbid = np.where(rc <= tol * scale, 0.0, np.inf)

    free = []
    A_eq = coupling_constraints(m, n)
    b_eq = np.concatenate([a, b])
    bounds = [(0, 0) if np.isinf(v) else (0, None) for v in forbid.ravel()]
    mass_tol = 1e-9 * float(a.sum())
    for i, j in tight:
        obj = np.zeros(m * n)
        obj[i * n + j] = -1.0
        res = linprog(obj, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs", options=HIGHS_OPTIONS)
        if res.status != 0:
            raise NumericFailure(res.message)
        if -res.fun > mass_tol:
            free.append((int(i), int(j)))
    return len(free) - _rank_of_support(free, m, n)
