"""Monotone neural survival curves with classifier-style evaluation."""

from monosurv.estimator import MonotoneSurvivalEstimator

__version__ = "0.1.0"

__all__ = ["MonotoneSurvivalEstimator", "__version__"]
