"""Metric-specific saliency maps derived from probabilistic fixation models."""

from .core import (
    FixationDataset,
    FixationSet,
    GridShape,
    density_from_grid,
    equalize,
    gaussian_blur,
    normalize_to_distribution,
    zscore_normalize,
)
from .derive import (
    DeriveConfig,
    MetricMapDeriver,
    SgdConfig,
    derive_auc_map,
    derive_cc_kldiv_map,
    derive_map,
    derive_nss_ig_map,
    derive_sauc_map,
    derive_sim_map,
    expected_sim,
    optimize_sim_map,
    project_to_simplex,
)
from .exceptions import CapReached, ContractError, NumericError, SaliencyError
from .metrics import (
    ALL_METRICS,
    MetricId,
    auc,
    auc_2afc_oracle,
    cc,
    empirical_saliency_map,
    ig,
    kldiv,
    nss,
    sauc,
    score,
    sim,
)
from .probabilistic import (
    CenterBiasKDE,
    PiecewiseLinearFn,
    ProbabilisticModelFit,
    SaliencyMapConverter,
    center_bias_radius,
    crossvalidate_bandwidth,
    eval_piecewise_linear,
    fit_conversion,
    fit_kde_centerbias,
    kde_density_for_size,
    log_likelihood,
    model_density,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_METRICS",
    "CapReached",
    "CenterBiasKDE",
    "ContractError",
    "DeriveConfig",
    "FixationDataset",
    "FixationSet",
    "GridShape",
    "MetricId",
    "MetricMapDeriver",
    "NumericError",
    "PiecewiseLinearFn",
    "ProbabilisticModelFit",
    "SaliencyError",
    "SaliencyMapConverter",
    "SgdConfig",
    "auc",
    "auc_2afc_oracle",
    "cc",
    "center_bias_radius",
    "crossvalidate_bandwidth",
    "density_from_grid",
    "derive_auc_map",
    "derive_cc_kldiv_map",
    "derive_map",
    "derive_nss_ig_map",
    "derive_sauc_map",
    "derive_sim_map",
    "empirical_saliency_map",
    "equalize",
    "eval_piecewise_linear",
    "expected_sim",
    "fit_conversion",
    "fit_kde_centerbias",
    "gaussian_blur",
    "ig",
    "kde_density_for_size",
    "kldiv",
    "log_likelihood",
    "model_density",
    "normalize_to_distribution",
    "nss",
    "optimize_sim_map",
    "project_to_simplex",
    "sauc",
    "score",
    "sim",
    "zscore_normalize",
]
