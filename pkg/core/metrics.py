"""
Peak extraction, target assignment and Monte-Carlo MSE.

A trial's score is the mean squared distance between the true targets and
the peaks assigned to them; the MSE of an estimator is the mean of that
score over trials.
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from core.errors import LocalizationError, ScoringError, ValidationError
from core.geometry import SearchGrid, build_steering_set
from core.scheduler import TrialScheduler
from core.synth import Scenario, synthesize
from modules.base import BaseEstimator, PowerSpectrum

RESOLUTION_SLACK = 1e-9


class Peak(NamedTuple):
    index: int
    position: np.ndarray
    value: float


@dataclass
class PeakSet:
    """Peaks sorted by descending value, ties by ascending grid index."""

    peaks: List[Peak] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    @property
    def indices(self) -> List[int]:
        return [p.index for p in self.peaks]

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.peaks]).reshape(-1, 3)


def _footprint(ndim: int) -> np.ndarray:
    return ndimage.generate_binary_structure(ndim, 1)


def find_peaks(spectrum: PowerSpectrum, max_peaks: Optional[int] = None) -> PeakSet:
    """
    Local maxima of a spectrum over the grid adjacency.

    Line and explicit-point grids use the two index neighbors; rectangles use
    the four axis neighbors. A plateau whose border is strictly lower counts
    as one peak, reported at its lowest grid index.
    """
    grid = spectrum.grid
    shape = grid.shape if grid is not None else (len(spectrum),)
    values = spectrum.values.reshape(shape)
    footprint = _footprint(len(shape))

    neighborhood_max = ndimage.maximum_filter(values, footprint=footprint, mode="constant", cval=-np.inf)
    is_max = values >= neighborhood_max
    labels, count = ndimage.label(is_max, structure=footprint)
    if count == 0:
        return PeakSet([])

    # A plateau touching an equal cell outside it is a shoulder, not a peak.
    ring = footprint.copy()
    ring[(1,) * len(shape)] = False
    outside = np.where(is_max, -np.inf, values)
    shoulder = is_max & (ndimage.maximum_filter(outside, footprint=ring, mode="constant", cval=-np.inf) >= values)
    rejected = set(np.unique(labels[shoulder]).tolist())

    flat_index = np.arange(values.size).reshape(shape)
    representatives = np.atleast_1d(ndimage.minimum(flat_index, labels, index=np.arange(1, count + 1)))
    indices = sorted(
        (int(i) for label, i in enumerate(representatives, start=1) if label not in rejected),
        key=lambda i: (-spectrum.values[i], i),
    )
    if max_peaks is not None:
        indices = indices[:max_peaks]

    points = grid.points if grid is not None else np.zeros((len(spectrum), 3))
    return PeakSet([Peak(i, points[i], float(spectrum.values[i])) for i in indices])


@dataclass
class TargetScore:
    """
    Per-target outcome of one trial.

    Args:
        squared_errors: Squared distance per true target, m²
        matched_peaks: Grid index of the assigned peak, -1 when unmatched
        resolved: Matched peak lies within the resolution radius
    """

    squared_errors: np.ndarray
    matched_peaks: np.ndarray
    resolved: np.ndarray

    @property
    def mean_squared_error(self) -> float:
        return float(np.mean(self.squared_errors))

    @property
    def unresolved(self) -> np.ndarray:
        return self.matched_peaks < 0

    @property
    def all_resolved(self) -> bool:
        return bool(self.resolved.all())

    @property
    def resolved_fraction(self) -> float:
        return float(np.mean(self.resolved))


def assign_and_score(
    peaks: PeakSet,
    truth: Sequence[Sequence[float]],
    resolution_radius: Optional[float] = None,
) -> TargetScore:
    """
    Match the K highest peaks to K true positions.

    The matching minimizes the total squared distance. With fewer peaks
    than targets, the unmatched targets score the squared distance to their
    nearest peak and are never counted as resolved.

    Args:
        peaks: Peaks sorted by value
        truth: True positions (K × 2 or K × 3)
        resolution_radius: Distance within which a matched target counts as
            resolved; None counts every matched target as resolved

    Raises:
        ScoringError: No peaks, or no targets
    """
    if len(peaks) == 0:
        raise ScoringError("cannot score an empty peak set")
    truth = np.array([np.pad(np.asarray(t, float), (0, 3 - len(t))) for t in truth]).reshape(-1, 3)
    if truth.shape[0] == 0:
        raise ScoringError("cannot score without true targets")

    k = truth.shape[0]
    top = peaks.peaks[:k]
    positions = np.array([p.position for p in top])
    cost = ((positions[:, None, :] - truth[None, :, :]) ** 2).sum(axis=2)   # (peaks, targets)
    rows, cols = linear_sum_assignment(cost)

    squared_errors = cost.min(axis=0)
    matched = np.full(k, -1, dtype=int)
    for r, c in zip(rows, cols):
        squared_errors[c] = cost[r, c]
        matched[c] = top[r].index

    resolved = matched >= 0
    if resolution_radius is not None:
        resolved &= np.sqrt(squared_errors) <= resolution_radius + RESOLUTION_SLACK
    return TargetScore(squared_errors, matched, resolved)


@dataclass
class EstimatorSummary:
    """Aggregate of one estimator over all trials."""

    mse: float
    std_error: float
    trials: int
    resolve_rate: float
    mean_resolved_fraction: float
    failures: int = 0
    first_failure: str = ""


@dataclass
class MonteCarloReport:
    """
    Args:
        per_estimator: Summary per estimator name
        config_echo: Scenario summary the run used
        trial_scores: Per-trial mean squared error (None for failed trials)
    """

    per_estimator: Dict[str, EstimatorSummary]
    config_echo: Dict
    trial_scores: Dict[str, List[Optional[float]]] = field(default_factory=dict)


class TrialOutcome(NamedTuple):
    estimator: str
    score: Optional[float]
    resolved_fraction: float
    all_resolved: bool
    failure: str


def run_trial(task: Tuple[Scenario, List[BaseEstimator], int]) -> List[TrialOutcome]:
    """
    Synthesize one trial and score every estimator on it.

    Estimator failures are recorded, not raised, so one bad trial never
    stops a run.
    """
    scenario, estimators, trial = task
    batch = synthesize(scenario, trial)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    radius = scenario.grid.step

    outcomes = []
    for estimator in estimators:
        name = estimator.get_name()
        try:
            spectrum = estimator.estimate(batch, steering, scenario)
            peaks = find_peaks(spectrum, max_peaks=scenario.num_targets)
            score = assign_and_score(peaks, scenario.target_positions, radius)
            outcomes.append(TrialOutcome(name, score.mean_squared_error, score.resolved_fraction,
                                         score.all_resolved, ""))
        except LocalizationError as e:
            outcomes.append(TrialOutcome(name, None, 0.0, False, f"trial {trial}: {e}"))
    return outcomes


def _summarize(outcomes: List[TrialOutcome], trials: int) -> EstimatorSummary:
    scores = np.array([o.score for o in outcomes if o.score is not None])
    failures = [o.failure for o in outcomes if o.score is None]
    if scores.size:
        mse = float(scores.mean())
        std_error = float(scores.std(ddof=1) / np.sqrt(scores.size)) if scores.size > 1 else 0.0
    else:
        mse, std_error = float("nan"), float("nan")
    return EstimatorSummary(
        mse=mse,
        std_error=std_error,
        trials=trials,
        resolve_rate=sum(o.all_resolved for o in outcomes) / trials,
        mean_resolved_fraction=sum(o.resolved_fraction for o in outcomes) / trials,
        failures=len(failures),
        first_failure=failures[0] if failures else "",
    )


def monte_carlo_mse(
    scenario: Scenario,
    estimators: List[BaseEstimator],
    trials: int,
    scheduler: Optional[TrialScheduler] = None,
    first_trial: int = 0,
) -> MonteCarloReport:
    """
    Run trials first_trial .. first_trial + trials - 1 and aggregate per estimator.

    Each trial draws from its own (seed, trial) stream, so extending a run
    never changes the scores of trials already computed.

    Raises:
        ValidationError: trials < 1, no estimators, or a scenario without targets
    """
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    if not estimators:
        raise ValidationError("no estimators selected")
    if scenario.num_targets < 1:
        raise ValidationError("Monte-Carlo scoring needs at least one target")

    scheduler = scheduler or TrialScheduler(1)
    tasks = [(scenario, estimators, t) for t in range(first_trial, first_trial + trials)]
    per_trial = scheduler.map(run_trial, tasks)

    per_estimator: Dict[str, EstimatorSummary] = {}
    trial_scores: Dict[str, List[Optional[float]]] = {}
    for estimator in estimators:
        name = estimator.get_name()
        outcomes = [o for trial in per_trial for o in trial if o.estimator == name]
        per_estimator[name] = _summarize(outcomes, trials)
        trial_scores[name] = [o.score for o in outcomes]

    return MonteCarloReport(per_estimator, scenario.summary(), trial_scores)
