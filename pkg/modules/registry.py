"""
Estimator registry for configuration-driven loading.

The registry:
- Loads all enabled estimators from config.yaml
- Applies per-run overrides (e.g. --isr-max-iter)
- Selects estimators by name for a run
"""

from typing import Dict, List, Optional

from core.errors import ValidationError
from modules.base import ESTIMATOR_NAMES, BaseEstimator


def available_estimators() -> Dict[str, type]:
    """Map of estimator names to classes."""
    from .beamspace import BeamspaceEstimator
    from .isr import IsrEstimator
    from .mvdr import MvdrEstimator

    return {
        "mvdr": MvdrEstimator,
        "bs": BeamspaceEstimator,
        "isr": IsrEstimator,
    }


class EstimatorRegistry:
    """Central registry for all spectrum estimators"""

    def __init__(self, config: Optional[Dict] = None, overrides: Optional[Dict[str, Dict]] = None,
                 verbose: bool = True):
        """
        Initialize registry and load estimators.

        Args:
            config: Configuration dict from config.yaml
            overrides: Per-estimator settings that win over config.yaml
            verbose: Print one status line per estimator
        """
        self.config = config or {}
        self.overrides = overrides or {}
        self.verbose = verbose
        self.estimators: Dict[str, BaseEstimator] = {}

        self.load_estimators()

    def _log(self, line: str) -> None:
        if self.verbose:
            print(line)

    def load_estimators(self):
        """Load all enabled estimators from configuration"""
        section = self.config.get("estimators", {}) or {}

        for name, EstimatorClass in available_estimators().items():
            settings = dict(section.get(name, {}) or {})
            settings.update(self.overrides.get(name, {}))

            # Estimators are on unless config.yaml switches them off
            if not settings.get("enabled", True):
                self._log(f"⏭️  Skipping disabled estimator: {name}")
                continue

            estimator = EstimatorClass(settings)
            self.estimators[name] = estimator
            self._log(f"✅ Loaded estimator: {estimator.describe()}")

    def get(self, name: str) -> BaseEstimator:
        if name not in self.estimators:
            raise ValidationError(
                f"estimator '{name}' is not enabled (enabled: {', '.join(self.estimators) or 'none'})"
            )
        return self.estimators[name]

    def select(self, names: List[str]) -> List[BaseEstimator]:
        """
        Resolve a name list from the CLI; 'all' means every enabled estimator.

        Returns:
            Estimators in canonical order (mvdr, bs, isr)
        """
        wanted = set(self.estimators) if "all" in names else set(names)
        unknown = wanted - set(ESTIMATOR_NAMES)
        if unknown:
            raise ValidationError(f"unknown estimator(s): {', '.join(sorted(unknown))}")
        return [self.get(name) for name in ESTIMATOR_NAMES if name in wanted]

    def get_all(self) -> List[BaseEstimator]:
        return list(self.estimators.values())
