"""Multivariate ensemble post-processing: calibration, copula reordering,
graph-network ensembles and proper-score verification."""

from . import copula, core, marginal, nnet, pipeline, scores

__version__ = "0.1.0"
__all__ = ["core", "scores", "marginal", "copula", "nnet", "pipeline"]
