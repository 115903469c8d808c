"""
MVDR Module - Capon spectrum on the block-diagonal SCM.

P_i = 1 / Σ_l a_lᴴ(p̄_i) (R̂_SCM,l + δI)⁻¹ a_l(p̄_i)

Each node block is factorized once (Cholesky) and solved against all grid
steering vectors of that node.
"""

from typing import List, Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from core.covariance import block_diag_scm
from core.errors import NumericalSingularityError, ValidationError
from core.geometry import SteeringSet
from core.synth import SampleBatch, Scenario
from modules.base import BaseEstimator, PowerSpectrum

SINGULAR_RCOND = 1e-13


def mvdr_spectrum(
    batch: SampleBatch,
    steering: SteeringSet,
    loading: float = 0.0,
    diagnostics: Optional[List[str]] = None,
) -> PowerSpectrum:
    """
    MVDR power spectrum over the steering set's grid.

    Args:
        batch: Snapshots
        steering: Grid steering vectors
        loading: Diagonal loading δ added to every node block

    Raises:
        NumericalSingularityError: A loaded block is singular
    """
    if loading < 0:
        raise ValidationError("loading must be non-negative")
    if batch.num_nodes != steering.num_nodes or batch.num_antennas != steering.num_antennas:
        raise ValidationError("batch and steering set disagree on array layout")

    n_r = batch.num_antennas
    covariance = block_diag_scm(batch)
    denominator = np.zeros(steering.num_points)
    for l in range(batch.num_nodes):
        block = covariance.block(l, n_r) + loading * np.eye(n_r)
        eigenvalues = np.linalg.eigvalsh(block)
        if eigenvalues[-1] <= 0 or eigenvalues[0] <= SINGULAR_RCOND * eigenvalues[-1]:
            raise NumericalSingularityError(
                f"SCM block of node {l} is singular (N_s={batch.num_samples}, N_R={n_r}); "
                f"use a diagonal loading such as the noise power"
            )
        factor = cho_factor(block, lower=True)
        vectors = steering.vectors[:, l, :].T                      # (N_R, N_G)
        solved = cho_solve(factor, vectors)
        denominator += np.einsum("rg,rg->g", vectors.conj(), solved).real

    return PowerSpectrum(1.0 / denominator, steering.grid, "mvdr", 0, list(diagnostics or []))


def default_loading(batch: SampleBatch, noise_power: float) -> float:
    """0 when every node block can be full rank (N_s ≥ N_R), σ_v² otherwise."""
    return 0.0 if batch.num_samples >= batch.num_antennas else float(noise_power)


class MvdrEstimator(BaseEstimator):
    """MVDR baseline"""

    def get_name(self) -> str:
        return "mvdr"

    def resolve_loading(self, batch: SampleBatch, scenario: Scenario) -> float:
        setting: Union[str, float, None] = self.config.get("loading", "auto")
        if setting in (None, "auto"):
            return default_loading(batch, scenario.assumed_noise_power)
        return float(setting)

    def estimate(self, batch: SampleBatch, steering: SteeringSet, scenario: Scenario) -> PowerSpectrum:
        loading = self.resolve_loading(batch, scenario)
        return mvdr_spectrum(batch, steering, loading, [f"mvdr loading {loading:.6g}"])
