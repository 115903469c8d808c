"""
Covariance construction: conventional SCM, block-diagonal SCM and the
analytic stacked covariance Σ_k A_k Λ_k A_kᴴ + σ_v² I.

Every CovarianceMatrix is symmetrized on construction. Diagonal loading is
only ever added through an explicit argument and is recorded on the result.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from core.errors import ValidationError
from core.geometry import target_steering_set
from core.synth import SampleBatch, Scenario

KINDS = ("scm", "block_diag_scm", "analytic", "isr_reconstructed")


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """
    Hermitian (N_R·L) × (N_R·L) covariance with provenance.

    Args:
        matrix: Complex square matrix; replaced by (M + Mᴴ)/2
        kind: One of KINDS
        loading: Diagonal loading already included in `matrix`
    """

    matrix: np.ndarray
    kind: str
    loading: float = 0.0

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError(f"covariance must be square, got shape {matrix.shape}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown covariance kind '{self.kind}'")
        if self.loading < 0:
            raise ValidationError("loading must be non-negative")
        matrix = 0.5 * (matrix + matrix.conj().T)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "loading", float(self.loading))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def block(self, node: int, num_antennas: int) -> np.ndarray:
        """Diagonal block belonging to one node."""
        s = slice(node * num_antennas, (node + 1) * num_antennas)
        return self.matrix[s, s]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self) -> bool:
        """Minimum eigenvalue ≥ −1e-8 · trace / dimension."""
        tolerance = 1e-8 * max(float(np.trace(self.matrix).real), 0.0) / self.dimension
        return self.min_eigenvalue() >= -tolerance

    def with_loading(self, loading: float) -> "CovarianceMatrix":
        loaded = self.matrix + loading * np.eye(self.dimension)
        return CovarianceMatrix(loaded, self.kind, self.loading + loading)


def _require_samples(batch: SampleBatch) -> None:
    if batch.num_samples < 1:
        raise ValidationError("covariance needs at least one snapshot")


def scm(batch: SampleBatch) -> CovarianceMatrix:
    """(1/N_s) Σ_n y(n) y(n)ᴴ."""
    _require_samples(batch)
    y = batch.snapshots
    return CovarianceMatrix(y @ y.conj().T / batch.num_samples, "scm")


def block_diag_scm(batch: SampleBatch) -> CovarianceMatrix:
    """Per-node SCMs on the diagonal, cross-node blocks exactly zero."""
    _require_samples(batch)
    matrix = np.zeros((batch.dimension, batch.dimension), dtype=complex)
    for s in batch.node_slices:
        y_l = batch.snapshots[s]
        matrix[s, s] = y_l @ y_l.conj().T / batch.num_samples
    return CovarianceMatrix(matrix, "block_diag_scm")


def analytic_covariance(
    scenario: Scenario,
    realized_channels: Optional[np.ndarray] = None,
) -> CovarianceMatrix:
    """
    Model covariance of y(n).

    Without channels, Λ_k = N_R · diag(σ²_{1,k}, …, σ²_{L,k}) (ensemble over
    α). With an (L, K) channel realization, Λ_k = N_R · α_k α_kᴴ, i.e. the
    covariance conditioned on that draw.
    """
    n_l, n_r = scenario.num_nodes, scenario.num_antennas
    dimension = n_l * n_r
    matrix = scenario.noise_power * np.eye(dimension, dtype=complex)
    if scenario.num_targets == 0:
        return CovarianceMatrix(matrix, "analytic")

    steering = target_steering_set(scenario.nodes, scenario.target_positions)
    if realized_channels is not None:
        alpha = np.asarray(realized_channels, dtype=complex)
        if alpha.ndim == 3:
            raise ValidationError("per-sample channels have no single conditional covariance")
        if alpha.shape != (n_l, scenario.num_targets):
            raise ValidationError(f"realized channels must have shape {(n_l, scenario.num_targets)}")
    for k in range(scenario.num_targets):
        a_k = steering.matrix(k)
        if realized_channels is None:
            lam = n_r * np.diag(scenario.channel_variances[:, k]).astype(complex)
        else:
            lam = n_r * np.outer(alpha[:, k], alpha[:, k].conj())
        matrix += a_k @ lam @ a_k.conj().T
    return CovarianceMatrix(matrix, "analytic")


def relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    """||a − b||_F / ||b||_F."""
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def dump_covariance(covariance: CovarianceMatrix, path: Union[str, Path]) -> Path:
    """
    Write a binary artifact: int64 rows, int64 cols, then row-major complex128.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.array(covariance.matrix.shape, dtype="<i8").tofile(f)
        np.ascontiguousarray(covariance.matrix, dtype="<c16").tofile(f)
    return path


def load_covariance(path: Union[str, Path], kind: str = "scm") -> CovarianceMatrix:
    """Read an artifact written by dump_covariance."""
    with open(path, "rb") as f:
        rows, cols = np.fromfile(f, dtype="<i8", count=2)
        data = np.fromfile(f, dtype="<c16", count=int(rows * cols))
    if data.size != rows * cols:
        raise ValidationError(f"{path}: truncated covariance artifact")
    return CovarianceMatrix(data.reshape(int(rows), int(cols)), kind)
