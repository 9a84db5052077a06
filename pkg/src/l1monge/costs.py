"""Transport costs: the distance, the strictly convex ``alpha`` cost, their
epsilon blend, and the potential-restricted cost used for the second
minimisation."""

from dataclasses import dataclass

import numpy as np

from .exceptions import MissingPotential

COST_KINDS = ("distance", "alpha", "c_epsilon", "beta_restricted")

#: tolerance on ``u(x) - u(y) = |x - y|`` for the restricted cost
BETA_TOL = 1e-7


@dataclass(frozen=True)
class CostSpec:
    """Which cost to use.

    Parameters
    ----------
    kind : {'distance', 'alpha', 'c_epsilon', 'beta_restricted'}
    epsilon : float
        Weight of ``alpha`` in ``c_epsilon``; must be positive for that kind.
    norm : str
        Only ``'euclidean'`` is supported.
    """

    kind: str = "distance"
    epsilon: float = 0.0
    norm: str = "euclidean"

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.norm != "euclidean":
            raise ValueError("only the euclidean norm is supported")
        if self.epsilon < 0 or not np.isfinite(self.epsilon):
            raise ValueError("epsilon must be a finite nonnegative number")
        if self.kind == "c_epsilon" and self.epsilon <= 0:
            raise ValueError("c_epsilon needs epsilon > 0")


def alpha(z):
    """``sqrt(1 + |z|^2)`` over the last axis.

    >>> alpha([[0.0, 0.0], [3.0, 4.0]])
    array([1.        , 5.09901951])
    """
    z = np.asarray(z, dtype=float)
    return np.sqrt(1.0 + np.sum(z * z, axis=-1))


def grad_alpha(z):
    """Gradient of :func:`alpha`: ``z / sqrt(1 + |z|^2)``."""
    z = np.asarray(z, dtype=float)
    return z / alpha(z)[..., None]


def pairwise_distance(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def eval_cost(spec, x, y, u=None):
    """Cost of moving a unit of mass from ``x`` to ``y``.

    ``u`` is a potential (any callable on points, e.g. a
    ``KantorovichPotential``) and is required for ``beta_restricted``, which
    returns ``alpha(x - y)`` where ``u(x) - u(y) = |x - y|`` and ``inf``
    elsewhere.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError("points have different dimensions")
    z = x - y
    dist = float(np.sqrt(z @ z))
    if spec.kind == "distance":
        return dist
    if spec.kind == "alpha":
        return float(alpha(z))
    if spec.kind == "c_epsilon":
        return dist + spec.epsilon * float(alpha(z))
    if u is None:
        raise MissingPotential("beta_restricted cost needs a potential")
    if abs(u(x) - u(y) - dist) <= BETA_TOL:
        return float(alpha(z))
    return np.inf


def cost_matrix(spec, X, Y, potential=None):
    """Dense cost matrix between point sets ``X`` (m, d) and ``Y`` (n, d).

    For ``beta_restricted`` pass ``potential`` as a pair of arrays
    ``(u_source, u_target)`` holding the potential at the rows of ``X`` and
    ``Y``, or an object exposing ``u_source`` and ``u_target``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    D = pairwise_distance(X, Y)
    if spec.kind == "distance":
        return D
    A = np.sqrt(1.0 + D * D)
    if spec.kind == "alpha":
        return A
    if spec.kind == "c_epsilon":
        return D + spec.epsilon * A
    if potential is None:
        raise MissingPotential("beta_restricted cost needs a potential")
    if hasattr(potential, "u_source"):
        us, ut = potential.u_source, potential.u_target
    else:
        us, ut = potential
    us = np.asarray(us, dtype=float)
    ut = np.asarray(ut, dtype=float)
    on_face = np.abs(us[:, None] - ut[None, :] - D) <= BETA_TOL
    return np.where(on_face, A, np.inf)
