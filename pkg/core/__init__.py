"""
Core infrastructure for the localization simulator.

This package contains the shared numerical services used by all estimators:
- Array geometry and steering vectors
- Scenario description and snapshot synthesis
- Covariance construction
- Scenario files and environment configuration
- Trial scheduling

core.metrics, core.sweep and core.export depend on the estimator package
and are imported from their modules directly.
"""

from .covariance import CovarianceMatrix, analytic_covariance, block_diag_scm, scm
from .errors import LocalizationError
from .geometry import SearchGrid, SensingNode, SteeringSet, build_steering_set
from .scenario_loader import load_scenario, save_scenario
from .scheduler import TrialScheduler
from .synth import SampleBatch, Scenario, TargetSource, synthesize

__all__ = [
    "CovarianceMatrix",
    "analytic_covariance",
    "block_diag_scm",
    "scm",
    "LocalizationError",
    "SearchGrid",
    "SensingNode",
    "SteeringSet",
    "build_steering_set",
    "load_scenario",
    "save_scenario",
    "TrialScheduler",
    "SampleBatch",
    "Scenario",
    "TargetSource",
    "synthesize",
]
