"""
Base class for all spectrum estimators.

All estimators must inherit from BaseEstimator and implement its abstract
methods. An estimator turns one SampleBatch into a PowerSpectrum over the
search grid.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.errors import ValidationError
from core.geometry import SearchGrid, SteeringSet
from core.synth import SampleBatch, Scenario

ESTIMATOR_NAMES = ("mvdr", "bs", "isr")


@dataclass(eq=False)
class PowerSpectrum:
    """
    Grid-aligned power values P_i.

    Args:
        values: Non-negative finite power per grid point
        grid: Grid the values belong to
        estimator: 'mvdr', 'bs' or 'isr'
        iterations_run: ISR iterations performed, 0 for the others
        diagnostics: Non-fatal numerical notes (clamping, ill-conditioning)
    """

    values: np.ndarray
    grid: Optional[SearchGrid]
    estimator: str
    iterations_run: int = 0
    diagnostics: List[str] = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"{self.estimator} spectrum contains non-finite values")
        if np.any(values < 0):
            raise ValidationError(f"{self.estimator} spectrum contains negative values")
        if self.grid is not None and values.size != len(self.grid):
            raise ValidationError(
                f"spectrum has {values.size} values for a grid of {len(self.grid)} points"
            )
        if self.estimator not in ESTIMATOR_NAMES:
            raise ValidationError(f"unknown estimator '{self.estimator}'")
        self.values = values

    def __len__(self) -> int:
        return self.values.size

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))

    def normalized(self) -> np.ndarray:
        """Values divided by their maximum (all zeros stay zeros)."""
        peak = self.values.max()
        return self.values / peak if peak > 0 else self.values.copy()


class BaseEstimator(ABC):
    """
    Abstract base class for spectrum estimators.

    Estimators are small, picklable objects configured from the
    `estimators:` section of config.yaml, so Monte-Carlo workers can run
    them in separate processes.
    """

    def __init__(self, config: Optional[Dict] = None):
        """
        Initialize estimator.

        Args:
            config: Estimator-specific configuration from config.yaml
        """
        self.config = dict(config or {})

    @abstractmethod
    def get_name(self) -> str:
        """
        Return unique estimator identifier.

        Returns:
            'mvdr', 'bs' or 'isr'
        """
        pass

    @abstractmethod
    def estimate(self, batch: SampleBatch, steering: SteeringSet, scenario: Scenario) -> PowerSpectrum:
        """
        Build the power spectrum for one batch.

        Args:
            batch: Snapshots of one trial
            steering: Steering set of the scenario's grid
            scenario: Scenario supplying σ_v², K and the grid

        Returns:
            PowerSpectrum aligned with steering.grid
        """
        pass

    def describe(self) -> str:
        settings = ", ".join(f"{k}={v}" for k, v in sorted(self.config.items()) if k != "enabled")
        return f"{self.get_name()}({settings})"

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.describe()}>"
