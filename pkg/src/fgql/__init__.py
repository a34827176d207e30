"""Adaptive fused group LASSO quantile regression."""

__version__ = "0.1.0"
