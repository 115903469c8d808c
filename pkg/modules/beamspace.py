"""
Beam-space (BS) Module - noise-subspace determinant spectrum.

P_i = 1 / det(A_iᴴ Π A_i), with Π the projector onto the eigenvectors of the
conventional SCM beyond the K·L strongest ones.
"""

from typing import List, Optional

import numpy as np

from core.covariance import scm
from core.errors import InvalidSubspaceError, ValidationError
from core.geometry import SteeringSet
from core.synth import SampleBatch, Scenario
from modules.base import BaseEstimator, PowerSpectrum

DET_FLOOR = 1e-300


def noise_projector(covariance: np.ndarray, signal_dimension: int) -> np.ndarray:
    """
    Orthonormal basis of the noise subspace.

    Returns:
        Eigenvectors of `covariance` beyond the `signal_dimension` largest
        eigenvalues, as columns
    """
    dimension = covariance.shape[0]
    if signal_dimension >= dimension:
        raise InvalidSubspaceError(
            f"signal subspace of dimension {signal_dimension} leaves no noise subspace in {dimension}"
        )
    _, eigenvectors = np.linalg.eigh(covariance)                   # ascending eigenvalues
    return eigenvectors[:, :dimension - signal_dimension]


def bs_spectrum_from_covariance(
    covariance: np.ndarray,
    steering: SteeringSet,
    num_targets: int,
    det_floor: float = DET_FLOOR,
    ceiling: Optional[float] = None,
    diagnostics: Optional[List[str]] = None,
) -> PowerSpectrum:
    """BS spectrum for an arbitrary Hermitian covariance in place of the SCM."""
    if num_targets < 0:
        raise ValidationError("num_targets must be non-negative")
    ceiling = 1.0 / det_floor if ceiling is None else float(ceiling)
    basis = noise_projector(np.asarray(covariance), num_targets * steering.num_nodes)

    projected = np.einsum("mj,mgl->jgl", basis.conj(), steering.stacked)     # U_nᴴ A_i
    gram = np.einsum("jgl,jgk->glk", projected.conj(), projected)            # A_iᴴ Π A_i
    determinants = np.linalg.det(gram).real

    clamped = determinants <= det_floor
    values = np.empty(steering.num_points)
    values[clamped] = ceiling
    values[~clamped] = 1.0 / determinants[~clamped]

    notes = list(diagnostics or [])
    if clamped.any():
        first = int(np.flatnonzero(clamped)[0])
        notes.append(
            f"bs determinant below {det_floor:g} at {int(clamped.sum())} grid point(s), "
            f"first {first}; clamped to {ceiling:g}"
        )
    return PowerSpectrum(values, steering.grid, "bs", 0, notes)


def bs_spectrum(
    batch: SampleBatch,
    steering: SteeringSet,
    num_targets: int,
    det_floor: float = DET_FLOOR,
    ceiling: Optional[float] = None,
) -> PowerSpectrum:
    """
    Beam-space spectrum from the conventional SCM.

    Raises:
        InvalidSubspaceError: K·L ≥ N_R·L
    """
    if batch.dimension != steering.dimension:
        raise ValidationError("batch and steering set disagree on array layout")
    return bs_spectrum_from_covariance(scm(batch).matrix, steering, num_targets, det_floor, ceiling)


class BeamspaceEstimator(BaseEstimator):
    """Beam-space baseline; K comes from the scenario ground truth"""

    def get_name(self) -> str:
        return "bs"

    def estimate(self, batch: SampleBatch, steering: SteeringSet, scenario: Scenario) -> PowerSpectrum:
        det_floor = float(self.config.get("det_floor", DET_FLOOR))
        ceiling = self.config.get("ceiling")
        return bs_spectrum(batch, steering, scenario.num_targets, det_floor, ceiling)
