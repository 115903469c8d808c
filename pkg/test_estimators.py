#!/usr/bin/env python3
"""
Test the MVDR, beam-space and ISR spectrum estimators against closed forms
and independently coded references.
"""

import sys
import os

# Add project root to path
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from core.covariance import CovarianceMatrix, analytic_covariance, scm
from core.errors import InvalidSubspaceError, NumericalSingularityError, ValidationError
from core.geometry import SearchGrid, SensingNode, build_steering_set
from core.scenario_loader import load_scenario
from core.synth import SampleBatch, TargetSource, synthesize
from modules.base import PowerSpectrum
from modules.beamspace import BeamspaceEstimator, bs_spectrum, bs_spectrum_from_covariance
from modules.isr import (
    IsrEstimator,
    TerminationRule,
    isr_init,
    isr_spectrum,
    isr_update_lambda,
    isr_update_r,
    isr_update_x,
    nearest_psd,
    wls_estimate,
)
from modules.mvdr import MvdrEstimator, default_loading, mvdr_spectrum


def small_setup(num_antennas=3, num_points=5):
    nodes = [
        SensingNode([0.0, 0.0, 2.0], num_antennas=num_antennas),
        SensingNode([4.0, 0.0, 2.0], num_antennas=num_antennas),
    ]
    grid = SearchGrid.line([0.5, 0.0], [3.5, 0.0], 3.0 / (num_points - 1))
    return nodes, grid, build_steering_set(nodes, grid)


def random_batch(rows, samples, num_nodes, seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((rows, samples)) + 1j * rng.standard_normal((rows, samples))
    return SampleBatch(y, num_nodes)


def batch_with_covariance(matrix, num_nodes):
    """Snapshots whose SCM equals `matrix` (N_s = dimension)."""
    root = np.linalg.cholesky(matrix)
    return SampleBatch(root * np.sqrt(matrix.shape[0]), num_nodes)


# MVDR

def test_mvdr_white_noise_is_flat():
    _, _, steering = small_setup(num_antennas=4)
    sigma2 = 0.7
    batch = batch_with_covariance(sigma2 * np.eye(8), 2)
    spectrum = mvdr_spectrum(batch, steering)
    assert spectrum.estimator == "mvdr"
    assert_allclose(spectrum.values, sigma2 / 2, rtol=1e-10)


def test_mvdr_single_source_closed_form():
    node = SensingNode([0.0, 0.0, 2.0], num_antennas=6)
    grid = SearchGrid.line([0.5, 0.0], [3.5, 0.0], 0.5)
    steering = build_steering_set([node], grid)
    sigma2, power, j = 0.2, 3.0, 4
    a = steering.vectors[j, 0]
    batch = batch_with_covariance(sigma2 * np.eye(6) + power * np.outer(a, a.conj()), 1)

    spectrum = mvdr_spectrum(batch, steering)
    assert spectrum.values[j] == pytest.approx(sigma2 + power, rel=1e-9)
    assert spectrum.argmax == j


def test_mvdr_needs_loading_when_undersampled():
    _, _, steering = small_setup(num_antennas=4)
    batch = random_batch(8, 2, 2, seed=1)
    with pytest.raises(NumericalSingularityError):
        mvdr_spectrum(batch, steering)
    assert np.all(mvdr_spectrum(batch, steering, loading=0.1).values > 0)


def test_mvdr_default_loading():
    assert default_loading(random_batch(8, 2, 2, 0), 0.3) == 0.3
    assert default_loading(random_batch(8, 4, 2, 0), 0.3) == 0.0


def test_mvdr_estimator_reads_loading_setting():
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    fixed = MvdrEstimator({"loading": 0.5}).estimate(batch, steering, scenario)
    assert_allclose(fixed.values, mvdr_spectrum(batch, steering, 0.5).values)
    assert "loading 0.5" in fixed.diagnostics[0]


# Beam-space

def reference_bs(covariance, steering, signal_dim):
    """Direct evaluation with an explicit projector built from the signal subspace."""
    _, vectors = scipy.linalg.eigh(covariance)
    signal = vectors[:, -signal_dim:] if signal_dim else vectors[:, :0]
    projector = np.eye(covariance.shape[0]) - signal @ signal.conj().T
    values = []
    for i in range(steering.num_points):
        a = steering.matrix(i)
        values.append(1.0 / np.linalg.det(a.conj().T @ projector @ a).real)
    return np.array(values)


def test_bs_matches_direct_evaluation():
    _, _, steering = small_setup(num_antennas=4, num_points=9)
    batch = random_batch(8, 12, 2, seed=4)
    spectrum = bs_spectrum(batch, steering, num_targets=1)
    assert_allclose(spectrum.values, reference_bs(scm(batch).matrix, steering, 2), rtol=1e-8)


def test_bs_rejects_full_signal_subspace():
    _, _, steering = small_setup(num_antennas=3)
    batch = random_batch(6, 8, 2, seed=2)
    with pytest.raises(InvalidSubspaceError):
        bs_spectrum(batch, steering, num_targets=3)


def test_bs_clamps_small_determinants():
    _, _, steering = small_setup(num_antennas=4)
    covariance = scm(random_batch(8, 12, 2, seed=5)).matrix
    # det(AᴴΠA) ≤ 1 for orthonormal A, so a floor of 2 clamps every point
    spectrum = bs_spectrum_from_covariance(covariance, steering, 1, det_floor=2.0, ceiling=7.0)
    assert_allclose(spectrum.values, 7.0)
    assert any("clamped" in note for note in spectrum.diagnostics)


def test_bs_is_scale_invariant():
    _, _, steering = small_setup(num_antennas=4)
    batch = random_batch(8, 12, 2, seed=6)
    assert_allclose(bs_spectrum(batch.scaled(3 - 1j), steering, 1).values,
                    bs_spectrum(batch, steering, 1).values, rtol=1e-8)


# ISR

def test_isr_identity_covariance_gives_matched_filter():
    _, _, steering = small_setup()
    batch = random_batch(6, 2, 2, seed=7)
    state = isr_init(batch, 1.0, steering.num_points).replace(r_hat=CovarianceMatrix(np.eye(6), "isr_reconstructed"))
    x_hat = isr_update_x(state, batch, steering)
    for i in range(steering.num_points):
        assert_allclose(x_hat[i], steering.matrix(i).conj().T @ batch.snapshots, atol=1e-12)


def test_wls_forms_agree():
    rng = np.random.default_rng(2024)
    _, _, steering = small_setup()
    for _ in range(1000):
        a = steering.matrix(rng.integers(steering.num_points))
        b = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        q = b @ b.conj().T + np.eye(6)
        g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        lam = g @ g.conj().T
        r = q + a @ lam @ a.conj().T
        y = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))

        full = wls_estimate(a, r, y)
        interference = wls_estimate(a, q, y)
        assert np.linalg.norm(full - interference) <= 1e-8 * np.linalg.norm(interference)


def test_one_isr_cycle_matches_explicit_inverses():
    _, _, steering = small_setup(num_antennas=3, num_points=5)
    batch = random_batch(6, 2, 2, seed=8)
    y = batch.snapshots
    sigma2 = 0.5

    # R(0): per-node SCM blocks plus σ² I
    r0 = np.zeros((6, 6), dtype=complex)
    for l in range(2):
        s = slice(3 * l, 3 * l + 3)
        r0[s, s] = y[s] @ y[s].conj().T / 2
    r0 += sigma2 * np.eye(6)
    r0_inv = np.linalg.inv(r0)

    lambdas, r1, powers = [], sigma2 * np.eye(6, dtype=complex), []
    for i in range(5):
        a = steering.matrix(i)
        x = np.linalg.inv(a.conj().T @ r0_inv @ a) @ a.conj().T @ r0_inv @ y
        lam = x @ x.conj().T / 2
        lambdas.append(lam)
        r1 += a @ lam @ a.conj().T
        powers.append(np.trace(lam).real / 3)

    spectrum, state = isr_spectrum(batch, steering, sigma2, TerminationRule(max_iterations=1), update="sample")
    assert state.iteration == 1
    assert_allclose(state.lambda_hat, np.array(lambdas), rtol=1e-10, atol=1e-12)
    assert_allclose(state.r_hat.matrix, r1, rtol=1e-10, atol=1e-12)
    assert_allclose(spectrum.values, powers, rtol=1e-10, atol=1e-12)


def test_posterior_first_cycle_is_energy_calibrated():
    _, _, steering = small_setup(num_antennas=3, num_points=5)
    batch = random_batch(6, 2, 2, seed=8)
    sigma2 = 0.5
    excess = np.sum(np.abs(batch.snapshots) ** 2) / 2 - 6 * sigma2
    assert excess > 0

    _, sample = isr_spectrum(batch, steering, sigma2, TerminationRule(max_iterations=1), update="sample")
    _, posterior = isr_spectrum(batch, steering, sigma2, TerminationRule(max_iterations=1))
    total = np.einsum("gll->", sample.lambda_hat).real
    assert np.einsum("gll->", posterior.lambda_hat).real == pytest.approx(excess, rel=1e-10)
    assert_allclose(posterior.lambda_hat, sample.lambda_hat * excess / total, rtol=1e-10, atol=1e-12)


def test_isr_init_loads_noise_power():
    sigma2 = 0.4
    state = isr_init(random_batch(6, 2, 2, seed=11), sigma2, 5)
    assert state.r_hat.loading == sigma2
    assert np.linalg.eigvalsh(state.r_hat.matrix).min() >= sigma2 - 1e-10
    assert state.lambda_hat.shape == (5, 2, 2)
    assert not state.lambda_hat.any()


def test_reconstruction_of_one_identity_block():
    _, _, steering = small_setup(num_antennas=3, num_points=5)
    sigma2 = 0.3
    lam = np.zeros((5, 2, 2), dtype=complex)
    lam[2] = np.eye(2)
    state = isr_init(random_batch(6, 2, 2, seed=0), sigma2, 5).replace(lambda_hat=lam)

    eigenvalues = np.linalg.eigvalsh(isr_update_r(state, steering, sigma2).matrix)
    assert_allclose(eigenvalues, [sigma2] * 4 + [1 + sigma2] * 2, atol=1e-12)


@pytest.mark.parametrize("num_samples", [1, 3])
def test_sample_source_covariance_trace_and_rank(num_samples):
    rng = np.random.default_rng(12)
    x = rng.standard_normal((5, 2, num_samples)) + 1j * rng.standard_normal((5, 2, num_samples))
    state = isr_init(random_batch(6, num_samples, 2, seed=1), 0.1, 5).replace(x_hat=x)

    lam = isr_update_lambda(state)
    assert_allclose(np.einsum("gll->g", lam).real, np.sum(np.abs(x) ** 2, axis=(1, 2)) / num_samples, rtol=1e-12)
    assert_allclose(lam, lam.conj().transpose(0, 2, 1), atol=1e-14)
    for g in range(5):
        assert np.linalg.matrix_rank(lam[g], tol=1e-10) <= min(2, num_samples)


def test_nearest_psd_clips_negative_eigenvalues():
    q = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)          # orthogonal
    indefinite = q @ np.diag([2.0, -1.0]) @ q.T
    projected = nearest_psd(indefinite[None].astype(complex))[0]
    assert_allclose(projected, q @ np.diag([2.0, 0.0]) @ q.T, atol=1e-12)

    psd = np.array([[[2.0, 1j], [-1j, 1.0]]])
    assert_allclose(nearest_psd(psd), psd, atol=1e-12)


@pytest.mark.parametrize("update", ["posterior", "sample"])
def test_isr_iterates_keep_model_structure(update):
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    sigma2 = scenario.noise_power

    for cycles in range(1, 5):
        _, state = isr_spectrum(batch, steering, sigma2, TerminationRule(cycles, 0.0),
                                update=update, growth_limit=None)
        assert state.iteration == cycles

        eigenvalues = np.linalg.eigvalsh(state.lambda_hat)
        assert eigenvalues.min() >= -1e-10 * max(1.0, eigenvalues.max())

        expected = sigma2 * np.eye(steering.dimension, dtype=complex)
        for i in range(steering.num_points):
            a = steering.matrix(i)
            expected += a @ state.lambda_hat[i] @ a.conj().T
        assert_allclose(state.r_hat.matrix, expected, atol=1e-10 * np.linalg.norm(expected))
        assert state.r_hat.min_eigenvalue() >= sigma2 - 1e-12 * np.linalg.norm(expected)


def test_isr_rejects_unknown_update_settings():
    _, _, steering = small_setup()
    batch = random_batch(6, 2, 2, 0)
    with pytest.raises(ValidationError):
        isr_spectrum(batch, steering, 0.1, update="gradient")
    with pytest.raises(ValidationError):
        isr_spectrum(batch, steering, 0.1, relaxation=2.5)
    with pytest.raises(ValidationError):
        isr_spectrum(batch, steering, 0.1, growth_limit=1.0)


def test_growth_guard_stops_diverging_sample_rule():
    scenario = load_scenario("scenario1_fig2")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    spectrum, state = isr_spectrum(batch, steering, scenario.noise_power, TerminationRule(15, 0.0),
                                   update="sample", growth_limit=2.0)
    assert state.iteration < 15
    assert state.trace_growth[-1] > 2.0
    assert all(g <= 2.0 for g in state.trace_growth[:-1])
    assert "grew to" in spectrum.diagnostics[-1]


def test_posterior_rule_is_bounded_on_close_targets():
    scenario = load_scenario("scenario1_fig2").with_snr_db(5.0)
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    spectrum = IsrEstimator({}).estimate(batch, steering, scenario)
    _, state = isr_spectrum(batch, steering, scenario.noise_power)

    assert max(state.trace_growth) < 2.0
    assert not any("grew to" in line for line in spectrum.diagnostics)
    peak = scenario.grid.points[spectrum.argmax]
    distances = np.linalg.norm(scenario.target_positions - peak, axis=1)
    assert distances.min() <= scenario.grid.step + 1e-9


def test_isr_zero_data_gives_zero_spectrum():
    _, _, steering = small_setup()
    batch = SampleBatch(np.zeros((6, 2)), 2)
    spectrum, _ = isr_spectrum(batch, steering, 0.1, TerminationRule(max_iterations=3))
    assert_allclose(spectrum.values, 0.0)
    assert spectrum.iterations_run == 3


def test_isr_requires_positive_noise_power():
    _, _, steering = small_setup()
    with pytest.raises(ValidationError):
        isr_spectrum(random_batch(6, 2, 2, 0), steering, 0.0)


def test_isr_stops_on_tolerance():
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    spectrum, state = isr_spectrum(batch, steering, scenario.noise_power, TerminationRule(50, 1e-3))
    assert 1 <= state.iteration <= 50
    assert len(state.spectrum_changes) == state.iteration
    assert state.spectrum_changes[0] == np.inf
    if state.iteration < 50:
        assert state.spectrum_changes[-1] < 1e-3
    assert np.all(spectrum.values >= 0)


def test_isr_pruning_freezes_weak_points():
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    _, state = isr_spectrum(batch, steering, scenario.noise_power, TerminationRule(5, 0.0), prune_threshold=0.9)
    assert state.active.any()
    assert not state.active.all()


def test_isr_estimator_reports_iterations():
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    spectrum = IsrEstimator({"max_iterations": 2, "tol": 0.0}).estimate(batch, steering, scenario)
    assert spectrum.iterations_run == 2
    assert "stopped after 2 iteration(s)" in spectrum.diagnostics[-1]


def test_isr_estimator_reads_update_settings():
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    config = {"max_iterations": 3, "tol": 0.0, "update": "sample", "growth_limit": None}
    spectrum = IsrEstimator(config).estimate(batch, steering, scenario)
    expected, _ = isr_spectrum(batch, steering, scenario.noise_power, TerminationRule(3, 0.0),
                               update="sample", growth_limit=None)
    assert_allclose(spectrum.values, expected.values, rtol=1e-12)


# Noiseless single target on a grid point

def on_grid_target(num_samples=2):
    scenario = load_scenario("tiny")
    index = scenario.grid.nearest_index(scenario.target_positions[0])
    target = TargetSource(scenario.grid.points[index], [1.0, 1.0])
    scenario = scenario.replace(targets=[target], noise_power=0.0, snr_db=None, num_samples=num_samples)
    return scenario, index, build_steering_set(scenario.nodes, scenario.grid)


def test_bs_peaks_at_noiseless_target():
    scenario, index, steering = on_grid_target(num_samples=4)
    spectrum = bs_spectrum(synthesize(scenario), steering, 1)
    assert spectrum.argmax == index
    assert spectrum.values[index] > 1e6 * np.median(spectrum.values)


def test_wls_recovers_noiseless_source():
    scenario, index, steering = on_grid_target()
    batch = synthesize(scenario)
    covariance = analytic_covariance(scenario.replace(noise_power=0.01), batch.channels)
    state = isr_init(batch, 0.01, steering.num_points).replace(r_hat=covariance)
    x_hat = isr_update_x(state, batch, steering)
    expected = np.sqrt(scenario.num_antennas) * batch.channels[:, 0][:, None] * batch.waveforms[0][None, :]
    assert_allclose(x_hat[index], expected, atol=1e-6)


def test_isr_peaks_at_noiseless_target():
    scenario, index, steering = on_grid_target()
    spectrum, _ = isr_spectrum(synthesize(scenario), steering, scenario.assumed_noise_power)
    assert spectrum.argmax == index


# Shared properties

def spectra_for(steering, batch, sigma2):
    return {
        "mvdr": mvdr_spectrum(batch, steering, loading=sigma2).values,
        "bs": bs_spectrum(batch, steering, 1).values,
        "isr": isr_spectrum(batch, steering, sigma2, TerminationRule(3, 0.0))[0].values,
    }


def test_grid_permutation_permutes_every_spectrum():
    nodes, grid, steering = small_setup(num_antennas=4, num_points=9)
    batch = random_batch(8, 3, 2, seed=9)
    order = np.random.default_rng(1).permutation(len(grid))
    permuted = build_steering_set(nodes, SearchGrid.from_points(grid.points[order]))

    base, shuffled = spectra_for(steering, batch, 0.2), spectra_for(permuted, batch, 0.2)
    for name in base:
        assert_allclose(shuffled[name], base[name][order], rtol=1e-8)


def test_spectra_scale_with_data_power():
    _, _, steering = small_setup(num_antennas=4, num_points=9)
    batch = random_batch(8, 10, 2, seed=10)
    c = 2.0 - 1.0j
    scale = abs(c) ** 2

    assert_allclose(mvdr_spectrum(batch.scaled(c), steering).values,
                    scale * mvdr_spectrum(batch, steering).values, rtol=1e-9)
    isr_plain = isr_spectrum(batch, steering, 0.3, TerminationRule(4, 0.0))[0].values
    isr_scaled = isr_spectrum(batch.scaled(c), steering, 0.3 * scale, TerminationRule(4, 0.0))[0].values
    assert_allclose(isr_scaled, scale * isr_plain, rtol=1e-8)


def test_power_spectrum_validation():
    grid = SearchGrid.line([0, 0], [1, 0], 0.5)
    with pytest.raises(ValidationError):
        PowerSpectrum(np.array([1.0, -1.0, 0.0]), grid, "mvdr")
    with pytest.raises(ValidationError):
        PowerSpectrum(np.array([1.0, np.nan, 0.0]), grid, "isr")
    with pytest.raises(ValidationError):
        PowerSpectrum(np.array([1.0, 2.0]), grid, "bs")
    with pytest.raises(ValidationError):
        PowerSpectrum(np.array([1.0, 2.0, 3.0]), grid, "music")
    assert_allclose(PowerSpectrum(np.array([1.0, 4.0, 2.0]), grid, "bs").normalized(), [0.25, 1.0, 0.5])


def test_beamspace_estimator_uses_scenario_target_count():
    scenario = load_scenario("tiny")
    batch = synthesize(scenario)
    steering = build_steering_set(scenario.nodes, scenario.grid)
    spectrum = BeamspaceEstimator({}).estimate(batch, steering, scenario)
    assert_allclose(spectrum.values, bs_spectrum(batch, steering, scenario.num_targets).values)


if __name__ == "__main__":
    pytest.main([__file__])
