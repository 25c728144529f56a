"""Miniature estimator library used as a test fixture."""
from sklearn.base import BaseEstimator, clone

__all__ = ["BaseEstimator", "clone"]
