"""Particle filtering with singular importance weights.

A sequential Monte Carlo engine over abstract state-space models and
importance proposals, weight-moment diagnostics for proposals whose
weights are pointwise unbounded, exact reference filters (dense grid and
Kalman), and a convergence-rate experiment harness with a CLI.
"""

from .convergence import ConvergenceReport, ExperimentConfig, RateFit, \
    fit_loglog_slope, run_convergence_study
from .cox import CoxParams, GammaProposal, ObservationSeries, \
    cox_likelihood_logdensity, cox_prior_sample, cox_transition_logdensity, \
    gamma_logdensity, gamma_propose, make_bootstrap_proposal, make_cox_model, \
    make_gamma_proposal, simulate
from .engine import estimate, filter_step, init_filter, log_unnormalized_weight, \
    normalize, propose_and_weight, run_filter
from .errors import PfconvError
from .gridfilter import GridDensity, grid_estimate, grid_init, grid_predict, \
    grid_update, run_cox_grid_filter
from .lineargauss import GaussianBelief, LinearGaussianModel, kalman_filter, \
    kalman_log_evidence, kalman_step, make_lg_bootstrap_proposal, make_lg_model, \
    simulate_lg
from .model import Proposal, StateSpaceModel, TestFunction, make_test_function
from .moments import MomentCondition, MomentStatus, MomentVerdict, \
    check_cox_moment_condition, empirical_weight_moment, ess, gamma_signed, \
    log_gamma, quadrature_weight_moment
from .particles import FilterRun, Stage, StepReport, WeightedParticleSet
from .resampling import ResampleScheme, apply_counts, get_scheme, \
    multinomial_resample, stratified_resample, systematic_resample
from .rng import RngStream

__version__ = "0.1.0"
