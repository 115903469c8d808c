"""
Spectrum estimators for the localization simulator.
"""

from .base import BaseEstimator, PowerSpectrum
from .registry import EstimatorRegistry

__all__ = ["BaseEstimator", "PowerSpectrum", "EstimatorRegistry"]
