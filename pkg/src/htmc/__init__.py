"""Reconstruct Markov chains and their mixtures from hitting times."""

from .chains import (
    CONTINUOUS,
    DISCRETE,
    Chain,
    MixtureModel,
    graph_chain,
    pseudoinverse,
    random_chain,
    random_mixture,
    stationary,
    stationary_of,
    to_laplacian,
)
from .errors import GenerationError, IrreducibilityError, NumericFailure, NumericWarning, ParameterError
from .gradients import fd_gradient, grad_hitting_loss, hitting_loss, loss_and_grad
from .hitting import (
    HittingTimeEstimate,
    add_noise,
    censor_missing,
    estimate_hitting_times,
    exact_hitting_times,
    exact_hitting_times_oracle,
    hitting_times,
    max_hitting_time,
)
from .learn import LearnConfig, LearnReport, learn_single, project_chain, wsbt_init
from .metrics import EvalReport, frobenius_error, mixture_recovery_error, prune_small_transitions, recovery_error, tv_row
from .mixture import MixtureConfig, MixtureResult, SoftAssignment, soft_assign, trail_log_likelihood, ultra_mc
from .simulate import Trail, sample_mixture_trails, sample_trail_continuous, sample_trail_discrete, sample_trails

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
