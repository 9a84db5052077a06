"""Selection among distance-optimal plans through the blended cost
``|x - y| + eps * alpha(x - y)``.

Two independent routes are provided: a ladder of blended problems solved by
the network simplex with decreasing ``eps``, and a direct two-stage LP
(HiGHS) that first computes the optimal distance cost and then minimises the
``alpha`` cost over the (slightly widened) optimal face.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec, cost_matrix
from .exceptions import Infeasible, MeasureMismatch, NonMonotoneLadder
from .transport_lp import TransportPlan, highs_transport, solve_exact

DEFAULT_EPSILONS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
FACE_TOL = 1e-9
CERTIFICATE_TOL = 1e-6
MONOTONE_TOL = 1e-9
STABLE_ATOL = 1e-9


def parse_epsilons(spec):
    """Parse ``'1e-1:1e-4:geometric'`` or ``'0.1,0.01'`` into a decreasing list.

    The geometric form alternates the mantissas 1 and 3 per decade, so
    ``'1e-1:1e-4:geometric'`` gives the default ladder.

    >>> parse_epsilons("1e-1:1e-3:geometric")
    [0.1, 0.03, 0.01, 0.003, 0.001]
    """
    if isinstance(spec, (list, tuple)):
        eps = [float(e) for e in spec]
    elif ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3 or parts[2] != "geometric":
            raise ValueError(f"cannot parse epsilon ladder {spec!r}")
        hi, lo = float(parts[0]), float(parts[1])
        if not hi >= lo > 0:
            raise ValueError("geometric ladder needs hi >= lo > 0")
        eps, e = [], hi
        while e >= lo * (1 - 1e-12):
            eps.append(e)
            # 1 -> 3e-1 -> 1e-1 ...
            lead = e / 10 ** np.floor(np.log10(e) + 1e-12)
            e = e * (0.3 if abs(lead - 1) < 1e-9 else 1 / 3)
            e = float(f"{e:.12g}")
    else:
        eps = [float(e) for e in spec.split(",") if e.strip()]
    _check_ladder(eps)
    return eps


def _check_ladder(eps):
    if not eps:
        raise ValueError("empty epsilon ladder")
    if any(not (e > 0 and np.isfinite(e)) for e in eps):
        raise ValueError("epsilons must be positive and finite")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")


@dataclass
class EpsilonLadder:
    """Blended-cost plans for a decreasing sequence of ``eps``.

    ``w1_values[k]`` and ``alpha_values[k]`` are the distance and ``alpha``
    integrals of ``plans[k]``.
    """

    epsilons: list
    plans: list
    w1_values: np.ndarray = field(init=False)
    alpha_values: np.ndarray = field(init=False)

    def __post_init__(self):
        _check_ladder(list(self.epsilons))
        if len(self.plans) != len(self.epsilons):
            raise ValueError("one plan per epsilon")
        refs = {(p.source_ref, p.target_ref) for p in self.plans}
        if len(refs) != 1:
            raise MeasureMismatch("ladder plans refer to different measures")
        self.w1_values = np.array([p.w1_cost() for p in self.plans])
        self.alpha_values = np.array([p.alpha_cost() for p in self.plans])

    @property
    def refs(self):
        return self.plans[0].source_ref, self.plans[0].target_ref

    @property
    def limit_plan(self):
        return self.plans[-1]

    def monotonicity_violations(self):
        """Worst increase of ``w1`` and worst decrease of ``alpha`` as eps drops."""
        if len(self.plans) < 2:
            return 0.0, 0.0
        return (float(max(np.max(np.diff(self.w1_values)), 0.0)),
                float(max(np.max(-np.diff(self.alpha_values)), 0.0)))

    def stabilized(self, atol=STABLE_ATOL):
        """Same entries (within ``atol``) on the last two rungs."""
        return len(self.plans) >= 2 and self.plans[-1].same_support(self.plans[-2], atol)

    def to_dict(self):
        return {
            "epsilons": [float(e) for e in self.epsilons],
            "w1_values": self.w1_values.tolist(),
            "alpha_values": self.alpha_values.tolist(),
            "stabilized": self.stabilized(),
        }


def run_ladder(src, tgt, epsilons=DEFAULT_EPSILONS, workers=1):
    """Solve the blended problem for every ``eps`` in ``epsilons``.

    With ``workers == 1`` the rungs run in order and each solve starts from
    the previous optimal basis. With more workers the rungs are solved
    concurrently from scratch; the plans are the same either way up to ties.
    """
    epsilons = [float(e) for e in epsilons]
    _check_ladder(epsilons)

    def solve(eps, warm=None):
        plan, _ = solve_exact(src, tgt, CostSpec("c_epsilon", eps), warm=warm)
        return plan

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            plans = list(pool.map(solve, epsilons))
    else:
        plans, warm = [], None
        for eps in epsilons:
            plans.append(solve(eps, warm))
            warm = plans[-1].info["basis"]
    return EpsilonLadder(epsilons, plans)


@dataclass
class SelectionCertificate:
    """Ladder limit against the two-stage optimum.

    The two inequalities ``w1_limit <= w1_opt + tol`` and
    ``alpha_limit <= alpha_opt + tol`` must hold for the limit to be a
    selected plan.
    """

    w1_limit: float
    alpha_limit: float
    w1_opt: float
    alpha_opt: float
    gaps: tuple
    stabilized: bool
    low_confidence: bool
    tol: float = CERTIFICATE_TOL

    @property
    def passed(self):
        return (self.w1_limit <= self.w1_opt + self.tol
                and self.alpha_limit <= self.alpha_opt + self.tol)

    def to_dict(self):
        return {
            "w1_limit": self.w1_limit,
            "alpha_limit": self.alpha_limit,
            "w1_opt": self.w1_opt,
            "alpha_opt": self.alpha_opt,
            "gaps": list(self.gaps),
            "stabilized": self.stabilized,
            "low_confidence": self.low_confidence,
            "tol": self.tol,
            "passed": self.passed,
        }


def convergence_report(ladder, oracle_plan, tol=CERTIFICATE_TOL, monotone_tol=MONOTONE_TOL):
    """Compare the last rung of ``ladder`` with the two-stage plan.

    Raises
    ------
    NonMonotoneLadder
        If ``w1`` grows (or ``alpha`` shrinks) by more than ``monotone_tol``
        relative along the ladder.
    MeasureMismatch
        If the ladder and the oracle plan are for different measures.
    """
    if not ladder.plans:
        raise ValueError("empty ladder")
    if ladder.refs != (oracle_plan.source_ref, oracle_plan.target_ref):
        raise MeasureMismatch("ladder and oracle plan refer to different measures")
    dw, da = ladder.monotonicity_violations()
    scale_w = max(1.0, float(np.max(np.abs(ladder.w1_values))))
    scale_a = max(1.0, float(np.max(np.abs(ladder.alpha_values))))
    if dw > monotone_tol * scale_w:
        raise NonMonotoneLadder(f"w1 increases by {dw:.3e} along the ladder")
    if da > monotone_tol * scale_a:
        raise NonMonotoneLadder(f"alpha cost decreases by {da:.3e} along the ladder")

    w1_limit = float(ladder.w1_values[-1])
    alpha_limit = float(ladder.alpha_values[-1])
    w1_opt = float(oracle_plan.info.get("w1_opt", oracle_plan.w1_cost()))
    alpha_opt = oracle_plan.alpha_cost()
    return SelectionCertificate(
        w1_limit, alpha_limit, w1_opt, alpha_opt,
        gaps=(w1_limit - w1_opt, alpha_limit - alpha_opt),
        stabilized=ladder.stabilized(),
        low_confidence=len(ladder.plans) < 2,
        tol=tol,
    )


def two_stage_oracle(src, tgt, face_tol=FACE_TOL, ladder=None):
    """Minimise the ``alpha`` cost over distance-optimal plans with two LPs.

    Parameters
    ----------
    src, tgt : DiscreteMeasure
    face_tol : float
        Relative widening of the distance constraint of the second LP,
        ``<D, P> <= W1 * (1 + face_tol)``.
    ladder : EpsilonLadder, optional
        Ladder to certify; the default ladder is run when omitted.

    Returns
    -------
    plan : TransportPlan
        Second-stage plan, with the first-stage optimum in ``info['w1_opt']``.
    certificate : SelectionCertificate
    """
    if not face_tol >= 0:
        raise ValueError("face_tol must be nonnegative")
    xs, a = src.atoms()
    ys, b = tgt.atoms()
    if max(a.size, b.size) > 1000:
        raise ValueError("two-stage oracle is limited to 1000 atoms per side")
    D = cost_matrix(CostSpec("distance"), xs, ys)
    A = cost_matrix(CostSpec("alpha"), xs, ys)
    _, w1_opt = highs_transport(a, b, D)
    bound = w1_opt * (1.0 + face_tol)
    try:
        P, _ = highs_transport(a, b, A, A_ub=D.reshape(1, -1), b_ub=[bound])
    except Infeasible as exc:
        raise Infeasible(f"face_tol={face_tol:g} too tight for the stage-1 solution: {exc}") from exc

    plan = TransportPlan.from_matrix(P, src, tgt, CostSpec("alpha"))
    plan.info.update(w1_opt=float(w1_opt), face_tol=float(face_tol))
    if ladder is None:
        ladder = run_ladder(src, tgt)
    return plan, convergence_report(ladder, plan)
