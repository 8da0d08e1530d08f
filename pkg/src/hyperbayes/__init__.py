"""Implicit posterior models: hypernetworks that sample the parameters of a primary model.

Training minimises a Monte-Carlo estimate of the negative posterior
predictive, using a small reverse-mode autodiff engine on numpy arrays.
"""

__version__ = "0.1.0"

from .datasets import (
    RegressionDataset,
    Standardizer,
    WindowedSeries,
    gen_multimodal,
    gen_xsinx,
    load_csv_series,
    split,
    standardize,
    synthetic_seasonal_series,
    window_series,
)
from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    HyperBayesError,
    IngestionError,
    MetricError,
    NumericError,
    ShapeError,
    TrainingDivergedError,
)
from .evaluation import PredictiveFan, detect_bimodality, forecast_metrics, mape, naive_forecast, rmse, sample_predictive
from .likelihoods import (
    GaussianLikelihood,
    L1Likelihood,
    SseL2Likelihood,
    gaussian_log_lik,
    l1_log_lik,
    mc_predictive_loss,
    sse_l2_log_lik,
)
from .posterior import (
    Hypernet,
    LatentSpec,
    MdnPosterior,
    PerLayerPosterior,
    PointPosterior,
    compose_per_layer,
    parse_arch,
    per_layer_hypernets,
    sample_conditional,
    sample_mdn,
    sample_unconditioned,
)
from .primary import MLP, LinearModel, NBeats, NBeatsConfig, ThetaBatch, ThetaLayout
from .tensor import Tensor, no_grad
from .trainer import Adam, AdamState, EarlyStopping, SGD, TrainConfig, TrainReport, adam_step, make_minibatches, train
from .experiments import ExperimentConfig, load_config, run, sweep, validate
