"""Rates of convergence for the intrinsic martingale of weighted branching processes.

The package covers the mean measure ``m(r)`` of a litter law and the
convergence criteria it determines, level-by-level simulation of the
weighted branching process, the size-biased spine, and Monte Carlo
estimation of the series ``sum_n e^{an} (W - W_n)`` and its relatives.
"""

__version__ = "0.1.0"

from .errors import (BranchingError, ConfigError, DivergentMoment, DomainError,
                     EnumerationTooLarge, InsufficientData, NonPositiveLitter,
                     PopulationOverflow, PreconditionError)
from .model import (DiscreteTable, IidScaledUniform, LogNormalWeights, OffspringLaw,
                    PoissonGW, law_from_dict, mc_mean_measure, mean_measure,
                    mean_measure_derivative, mu_p, normalize, sample_litter, w1_moment)
from .moments import (CriterionReport, MomentProfile, analyze, check_lp, check_main1,
                      check_main2, find_q, find_theta, g_fn, h_fn, predicted_rate)
from .population import (Ensemble, PopulationRun, estimate_s_n, exact_level_distribution,
                         exact_s_n, iter_generations, run_population, s_n_curve,
                         simulate_ensemble, truncate_law)
from .spine import (SpinePath, SpineSample, concave_bound_check, sample_spine, sample_spines,
                    spine_duality_check, step_iid_check, theta_tilt_weight)
from .series import (RateFit, SeriesTrail, b_coeff, build_trail, build_trails,
                     burkholder_check, burkholder_constants, fit_rate, fixpoint_check,
                     increment_curve, increment_lp, moment_growth)
from .catalog import catalog, degenerate, two_point
