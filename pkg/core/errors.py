"""
Exception hierarchy for the localization simulator.

Library code raises these; the CLI in main.py turns them into a single
error line and a nonzero exit status.
"""

from typing import Optional


class LocalizationError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LocalizationError):
    """An input violates a documented precondition."""


class DegenerateGeometryError(LocalizationError):
    """A grid point or target coincides with a sensing node position."""

    def __init__(self, message: str, grid_index: Optional[int] = None):
        super().__init__(message)
        self.grid_index = grid_index


class NumericalSingularityError(LocalizationError):
    """A matrix that must be inverted is singular."""


class InvalidSubspaceError(LocalizationError):
    """The signal subspace leaves no room for a noise subspace."""


class IterationDivergenceError(LocalizationError):
    """A non-finite value appeared while iterating."""

    def __init__(self, iteration: int, grid_index: int, quantity: str):
        super().__init__(
            f"non-finite {quantity} at iteration {iteration}, grid point {grid_index}"
        )
        self.iteration = iteration
        self.grid_index = grid_index
        self.quantity = quantity


class ScoringError(LocalizationError):
    """Peaks cannot be scored against the ground truth."""


class ScenarioError(LocalizationError):
    """A scenario file failed to parse or validate.

    Args:
        message: What is wrong
        source: File the scenario came from (or '<dict>')
        key_path: Dotted path of the offending key, e.g. 'targets[1].position'
    """

    def __init__(self, message: str, source: str = "<dict>", key_path: str = ""):
        location = f"{source}:{key_path}" if key_path else source
        super().__init__(f"{location}: {message}")
        self.source = source
        self.key_path = key_path
