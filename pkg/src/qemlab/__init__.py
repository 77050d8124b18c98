"""EM, randomized EM, k-means and an emulated quantum EM for Gaussian mixtures."""

from .core import (
    DISCARD,
    ConfigError,
    CovarianceError,
    Dataset,
    DegenerateWeightsError,
    GmmParams,
    HardAssignment,
    gaussian_logpdf,
    gmm_log_likelihood,
    normalize_weights,
    repair_covariance,
    validate_params,
)

__version__ = "0.1.0"
