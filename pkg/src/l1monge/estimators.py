"""scikit-learn style wrappers around the exact solver and the selection."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .costs import CostSpec
from .epsilon_selection import DEFAULT_EPSILONS, FACE_TOL, run_ladder, two_stage_oracle
from .exceptions import MissingValue
from .measure import DiscreteMeasure
from .support_diagnostics import SupportSet, graphness
from .transport_lp import solve_exact


def _measure(X, sample_weight, name):
    X = check_array(X, ensure_2d=True, dtype=np.float64, input_name=name)
    if sample_weight is None:
        return DiscreteMeasure.from_atoms(X)
    w = check_array(sample_weight, ensure_2d=False, dtype=np.float64, input_name=f"{name} weights")
    if w.shape != (X.shape[0],) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError(f"{name} weights must be nonnegative, one per row, with positive sum")
    return DiscreteMeasure.from_atoms(X, w, normalize=True)


class _PlanTransform(TransformerMixin):
    """``transform`` sends fitted source atoms to their barycentric targets."""

    def transform(self, X, atol=1e-12):
        check_is_fitted(self, "plan_")
        X = check_array(X, dtype=np.float64)
        P = self.coupling_
        src = self.plan_.source_points
        bary = (P @ self.plan_.target_points) / P.sum(axis=1, keepdims=True)
        out = np.empty((X.shape[0], self.plan_.target_points.shape[1]))
        for k, x in enumerate(X):
            hit = np.flatnonzero(np.all(np.abs(src - x) <= atol, axis=1))
            if hit.size == 0:
                raise MissingValue(f"row {k} is not a fitted source atom")
            out[k] = bary[hit[0]]
        return out


class ExactTransport(_PlanTransform, BaseEstimator):
    """Optimal coupling between two weighted point clouds.

    Parameters
    ----------
    cost : {'distance', 'alpha', 'c_epsilon'}
    epsilon : float
        Weight of the ``alpha`` term for ``'c_epsilon'``.
    pivot : {'block', 'dantzig', 'bland'}

    Attributes
    ----------
    plan_ : TransportPlan
    potential_ : KantorovichPotential
    coupling_ : ndarray of shape (n_source_atoms, n_target_atoms)
    cost_ : float
    """

    def __init__(self, cost="distance", epsilon=0.0, pivot="block"):
        self.cost = cost
        self.epsilon = epsilon
        self.pivot = pivot

    def fit(self, X, Y, sample_weight=None, target_weight=None):
        src = _measure(X, sample_weight, "X").coalesce()
        tgt = _measure(Y, target_weight, "Y").coalesce()
        self.plan_, self.potential_ = solve_exact(src, tgt, CostSpec(self.cost, self.epsilon), pivot=self.pivot)
        self.coupling_ = self.plan_.matrix()
        self.cost_ = self.plan_.value
        return self


class SelectedMongeMap(_PlanTransform, BaseEstimator):
    """Distance-optimal plan selected by the ``alpha`` cost, as a map.

    Parameters
    ----------
    epsilons : sequence of float
        Decreasing ladder; the last rung's plan is kept.
    oracle : bool
        Also run the two-stage LP and store its certificate.
    face_tol : float

    Attributes
    ----------
    plan_, ladder_, certificate_ (or None), graphness_, coupling_
    """

    def __init__(self, epsilons=DEFAULT_EPSILONS, oracle=False, face_tol=FACE_TOL):
        self.epsilons = epsilons
        self.oracle = oracle
        self.face_tol = face_tol

    def fit(self, X, Y, sample_weight=None, target_weight=None):
        src = _measure(X, sample_weight, "X").coalesce()
        tgt = _measure(Y, target_weight, "Y").coalesce()
        self.ladder_ = run_ladder(src, tgt, list(self.epsilons))
        self.plan_ = self.ladder_.limit_plan
        self.certificate_ = None
        if self.oracle:
            _, self.certificate_ = two_stage_oracle(src, tgt, self.face_tol, ladder=self.ladder_)
        self.graphness_ = graphness(SupportSet.from_plan(self.plan_))
        self.coupling_ = self.plan_.matrix()
        return self
