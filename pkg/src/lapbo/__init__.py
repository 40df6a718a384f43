"""Laplace-approximated MLP classifiers with GP-Hedge tuning of the posterior's
regularisation (N, tau)."""

from .bo import (
    EvaluationRecord,
    HedgeState,
    SearchConfig,
    acq_ei,
    acq_lcb,
    acq_pi,
    bo_search,
    hedge_update,
    propose_portfolio,
    random_search,
    read_trace,
)
from .curvature import DiagonalCurvature, HyperGroup, diagonal_fisher, layer_layout, regularize
from .data import gen_dataset, read_csv, write_csv
from .experiment import EvalContext, ExperimentConfig, evaluate_point, load_config, report, run_experiment
from .gp import GPModel, KernelConfig, gp_fit, gp_posterior
from .laplace import LaplacePosterior, laplace_posterior, predict_mc, sample_weights
from .metrics import ReliabilityBins, ScoreReport, reliability, score
from .nn import ArchSpec, Dataset, Network, forward, grad_nll, init_network, train_sgd

__version__ = "0.1.0"
