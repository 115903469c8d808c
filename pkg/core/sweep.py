"""
Parameter sweeps: one Monte-Carlo run per value of a single scenario axis.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from core.errors import ValidationError
from core.metrics import MonteCarloReport, monte_carlo_mse
from core.scheduler import TrialScheduler
from core.synth import Scenario
from modules.base import BaseEstimator

SWEEP_AXES = ("num_samples", "snr_db", "num_antennas")
INTEGER_AXES = ("num_samples", "num_antennas")


@dataclass
class SweepSpec:
    """
    Args:
        axis: 'num_samples', 'snr_db' or 'num_antennas'
        values: Strictly increasing axis values
        base: Scenario the sweep varies
        estimators: Estimators evaluated at every point
        trials: Monte-Carlo trials per point
    """

    axis: str
    values: List[float]
    base: Scenario
    estimators: List[BaseEstimator] = field(default_factory=list)
    trials: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValidationError(f"unknown sweep axis '{self.axis}', expected one of {SWEEP_AXES}")
        if not self.values:
            raise ValidationError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValidationError(f"sweep values must be strictly increasing, got {list(self.values)}")
        if self.axis in INTEGER_AXES:
            if any(float(v) != int(v) or v < 1 for v in self.values):
                raise ValidationError(f"{self.axis} values must be positive integers")
            self.values = [int(v) for v in self.values]
        else:
            self.values = [float(v) for v in self.values]
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")

    def scenario_at(self, value) -> Scenario:
        """The base scenario with the sweep axis set to `value`."""
        if self.axis == "num_samples":
            return self.base.replace(num_samples=int(value))
        if self.axis == "snr_db":
            return self.base.with_snr_db(float(value))
        return self.base.with_num_antennas(int(value))

    @classmethod
    def from_scenario(cls, base: Scenario, estimators: Sequence[BaseEstimator], trials: int,
                      axis: Optional[str] = None, values: Optional[Sequence[float]] = None) -> "SweepSpec":
        """Explicit axis/values win; otherwise the scenario file's `sweep:` block."""
        block: Dict = base.extras.get("sweep", {}) or {}
        axis = axis or block.get("axis")
        values = values if values is not None else block.get("values")
        if axis is None or values is None:
            raise ValidationError("sweep needs an axis and values (flags or the scenario's sweep block)")
        return cls(axis, list(values), base, list(estimators), trials)


def run_sweep(spec: SweepSpec, scheduler: Optional[TrialScheduler] = None,
              verbose: bool = False) -> List[Tuple[float, MonteCarloReport]]:
    """Monte-Carlo report for every sweep value, in sweep order."""
    results = []
    for value in spec.values:
        if verbose:
            print(f"🔁 {spec.axis} = {value}")
        report = monte_carlo_mse(spec.scenario_at(value), spec.estimators, spec.trials, scheduler)
        results.append((value, report))
    return results
