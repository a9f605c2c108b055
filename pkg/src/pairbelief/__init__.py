"""Belief-density estimation from pairwise comparisons.

Simulate or elicit "which of these two configurations is better?" judgments,
fit a score-matching diffusion model to the winning points, undo the
preference-induced tempering with a position-dependent field, and sample or
evaluate the recovered belief density.
"""

from .comparisons import (
    UNIT_VARIANCE_S,
    ComparisonDataset,
    RUMConfig,
    choice_prob,
    simulate_comparisons,
)
from .density import DensityEvalConfig, model_log_density
from .metrics import MetricReport, mmtv, wasserstein
from .pipeline import ExperimentConfig, ExperimentResult, run_experiment
from .sampling import ALDConfig, ald_run, default_preset, fast_2d_preset, scaled_ald_run
from .scoremodel import JointScoreNet, ScoreModelConfig, train
from .targets import BeliefTarget, BoxDomain, SamplingDist, get_target, target_names, uniform_box
from .tempering import (
    TemperingFieldEstimate,
    analytic_bt_field,
    analytic_exp_field,
    build_field_estimate,
    estimate_field,
    mwd_quadrature,
    train_ratio_net,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
