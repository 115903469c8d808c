#!/usr/bin/env python3
"""
Test peak extraction, target assignment and Monte-Carlo aggregation.
"""

import sys
import os

# Add project root to path
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.errors import ScoringError, ValidationError
from core.geometry import SearchGrid
from core.metrics import Peak, PeakSet, assign_and_score, find_peaks, monte_carlo_mse
from core.scenario_loader import load_scenario
from core.scheduler import TrialScheduler
from modules import EstimatorRegistry
from modules.base import PowerSpectrum

LINE = SearchGrid.line([0, 0], [4, 0], 1.0)


def line_spectrum(values):
    return PowerSpectrum(np.array(values, dtype=float), LINE, "isr")


def test_line_peaks_sorted_by_value():
    peaks = find_peaks(line_spectrum([0, 1, 0, 2, 0]))
    assert peaks.indices == [3, 1]
    assert_allclose(peaks.positions, [[3, 0, 0], [1, 0, 0]])


def test_plateau_reported_once_at_lowest_index():
    assert find_peaks(line_spectrum([0, 2, 2, 0, 1])).indices == [1, 4]


def test_shoulder_is_not_a_peak():
    assert find_peaks(line_spectrum([0, 1, 1, 3, 0])).indices == [3]


def test_edge_maximum_counts():
    assert find_peaks(line_spectrum([5, 1, 0, 1, 2])).indices == [0, 4]


def test_max_peaks_truncates():
    assert find_peaks(line_spectrum([1, 0, 3, 0, 2]), max_peaks=2).indices == [2, 4]


def test_rectangle_uses_four_neighbors():
    grid = SearchGrid.rectangle([0, 2], [0, 2], 1.0)
    values = np.zeros(9)
    values[0] = 1.0          # corner (0, 0)
    values[4] = 3.0          # center (1, 1)
    values[8] = 2.0          # corner (2, 2), diagonal to the center
    peaks = find_peaks(PowerSpectrum(values, grid, "mvdr"))
    assert peaks.indices == [4, 8, 0]


def peak_set(points):
    return PeakSet([Peak(i, np.array([x, y, 0.0]), 10.0 - i) for i, (x, y) in enumerate(points)])


def test_assignment_minimizes_total_error():
    score = assign_and_score(peak_set([(8.0, 0), (7.8, 0)]), [[7.8, 0], [8.0, 0]], resolution_radius=0.1)
    assert_allclose(score.squared_errors, [0.0, 0.0], atol=1e-24)
    assert score.matched_peaks.tolist() == [1, 0]
    assert score.all_resolved
    assert score.mean_squared_error == pytest.approx(0.0, abs=1e-24)


def test_missing_peak_scores_nearest_distance():
    score = assign_and_score(peak_set([(7.9, 0)]), [[7.8, 0], [8.0, 0]], resolution_radius=0.1)
    assert_allclose(score.squared_errors, [0.01, 0.01], rtol=1e-9)
    assert score.unresolved.sum() == 1
    assert score.resolved.sum() == 1
    assert score.resolved_fraction == 0.5
    assert not score.all_resolved


def test_resolution_radius():
    score = assign_and_score(peak_set([(2.3, 0), (5.0, 0)]), [[2.0, 0], [5.0, 0]], resolution_radius=0.1)
    assert score.resolved.tolist() == [False, True]
    assert_allclose(score.squared_errors, [0.09, 0.0], atol=1e-12)


def test_empty_peak_set_is_a_scoring_error():
    with pytest.raises(ScoringError):
        assign_and_score(PeakSet([]), [[1, 0]])


def tiny_estimators(*names):
    return EstimatorRegistry({}, verbose=False).select(list(names) or ["all"])


def test_monte_carlo_report_shape():
    scenario = load_scenario("tiny")
    report = monte_carlo_mse(scenario, tiny_estimators(), trials=3)
    assert list(report.per_estimator) == ["mvdr", "bs", "isr"]
    for name, summary in report.per_estimator.items():
        assert summary.trials == 3
        assert summary.failures == 0
        assert summary.mse >= 0
        assert 0 <= summary.resolve_rate <= summary.mean_resolved_fraction <= 1
        assert len(report.trial_scores[name]) == 3
    assert report.config_echo["name"] == "tiny"


def test_monte_carlo_is_reproducible_and_extendable():
    scenario = load_scenario("tiny")
    estimators = tiny_estimators("isr")
    full = monte_carlo_mse(scenario, estimators, trials=4)
    again = monte_carlo_mse(scenario, estimators, trials=4)
    tail = monte_carlo_mse(scenario, estimators, trials=2, first_trial=2)
    assert full.trial_scores == again.trial_scores
    assert full.trial_scores["isr"][2:] == tail.trial_scores["isr"]


def test_parallel_workers_match_inline_run():
    scenario = load_scenario("tiny")
    estimators = tiny_estimators("mvdr", "isr")
    inline = monte_carlo_mse(scenario, estimators, trials=4, scheduler=TrialScheduler(1))
    pooled = monte_carlo_mse(scenario, estimators, trials=4, scheduler=TrialScheduler(2))
    assert inline.trial_scores == pooled.trial_scores


def test_failed_trials_are_counted():
    scenario = load_scenario("tiny")
    # Without loading the 4-antenna blocks are singular at N_s = 2
    estimators = EstimatorRegistry({"estimators": {"mvdr": {"loading": 0.0}}}, verbose=False).select(["mvdr"])
    report = monte_carlo_mse(scenario.replace(num_samples=2), estimators, trials=2)
    summary = report.per_estimator["mvdr"]
    assert summary.failures == 2
    assert np.isnan(summary.mse)
    assert "singular" in summary.first_failure


def test_monte_carlo_validation():
    scenario = load_scenario("tiny")
    with pytest.raises(ValidationError):
        monte_carlo_mse(scenario, tiny_estimators(), trials=0)
    with pytest.raises(ValidationError):
        monte_carlo_mse(scenario, [], trials=1)
    with pytest.raises(ValidationError):
        monte_carlo_mse(scenario.replace(targets=[]), tiny_estimators(), trials=1)


if __name__ == "__main__":
    pytest.main([__file__])
