"""Exact discrete L1 optimal transport with selection by a strictly convex
secondary cost, entropy convexity checks and support diagnostics."""

from .costs import CostSpec, alpha, cost_matrix, eval_cost, grad_alpha
from .epsilon_selection import (EpsilonLadder, SelectionCertificate, convergence_report,
                                parse_epsilons, run_ladder, two_stage_oracle)
from .estimators import ExactTransport, SelectedMongeMap
from .exceptions import *  # noqa: F401,F403
from .gaussian_model import (CovarianceSpec, TruncatedGaussian, build_covariance,
                             grid_discretize, project, sample)
from .interpolation_entropy import (EntropyReading, InterpolationPath, build_path,
                                    check_convexity, entropy_relative, geodesic_check,
                                    interpolate)
from .measure import DiscreteMeasure, GridSpec
from .support_diagnostics import (GraphnessReport, SupportSet, check_cyclical_monotonicity,
                                  check_hsupopt, check_potential, gamma_inverse_query,
                                  graphness, lebesgue_ratio_estimate)
from .transport_lp import (KantorovichPotential, TransportPlan, optimal_face_dimension,
                           solve_exact, w1)

__version__ = "0.1.0"
