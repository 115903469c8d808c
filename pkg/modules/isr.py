"""
ISR Module - iterative sparse recovery of the grid power spectrum.

Every grid point is treated as a potential source. One cycle runs

    R̂(t) → x̂_i(n) → Λ̂_i → R̂(t+1)

with
    x̂_i(n) = (A_iᴴ R̂⁻¹ A_i)⁻¹ A_iᴴ R̂⁻¹ y(n)      weighted least squares
    Λ̂_i    = (1/N_s) Σ_n x̂_i(n) x̂_i(n)ᴴ          sample source covariance
    R̂      = Σ_i A_i Λ̂_i A_iᴴ + σ_v² I              reconstruction
    P_i    = tr(Λ̂_i) / N_R                          spectrum

R̂ starts from the block-diagonal SCM plus σ_v² I, since with N_s < N_R the
bare SCM blocks are singular. R̂ is Cholesky-factorized once per cycle and
reused for every grid point and sample.

Two Λ̂ update rules are available:

- "sample": the sample covariance above on every cycle.
- "posterior" (default): the sample covariance on the first cycle, rescaled
  so Σ_i tr(Λ̂_i) equals the data energy above the noise floor; later cycles
  replace it by the posterior second moment of the grid sources,

      μ_i(n) = Λ̂_i A_iᴴ R̂⁻¹ y(n) = Λ̂_i (A_iᴴ R̂⁻¹ A_i) x̂_i(n)
      Λ̂_i   ← (1/N_s) Σ_n μ_i(n) μ_i(n)ᴴ + Λ̂_i − Λ̂_i A_iᴴ R̂⁻¹ A_i Λ̂_i

  taken as an over-relaxed step and projected back onto PSD matrices.

Where a node sees many grid points at almost the same angle, the sample rule
feeds the WLS noise gain (A_iᴴ R̂⁻¹ A_i)⁻¹ back into R̂ and tr(R̂) grows from
cycle to cycle. The posterior rule keeps tr(R̂) near the data energy. Both
rules share the growth guard: once tr(R̂) exceeds `growth_limit` times
tr(R̂(0)) the cycle stops and a diagnostic is recorded.
"""

import dataclasses
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from core.covariance import CovarianceMatrix, block_diag_scm
from core.errors import IterationDivergenceError, NumericalSingularityError, ValidationError
from core.geometry import SteeringSet
from core.synth import SampleBatch, Scenario
from modules.base import BaseEstimator, PowerSpectrum

ILL_CONDITIONED = 1e12
UPDATE_RULES = ("posterior", "sample")
DEFAULT_RELAXATION = 2.0
GROWTH_LIMIT = 10.0


@dataclass(frozen=True)
class TerminationRule:
    """Stop after max_iterations, or once ||P(t+1) − P(t)|| / ||P(t)|| < tol."""

    max_iterations: int = 30
    tol: float = 1e-3

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValidationError("max_iterations must be a positive integer")
        if self.tol < 0:
            raise ValidationError("tol must be non-negative")


@dataclass(frozen=True, eq=False)
class IsrState:
    """
    Iterate of the cyclic updates.

    Args:
        r_hat: Reconstructed covariance R̂
        lambda_hat: Λ̂_i, shape (N_G, L, L)
        x_hat: x̂_i(n), shape (N_G, L, N_s)
        iteration: Completed cycles t
        active: Grid points still updated (all True unless pruning is on)
        spectrum_changes: Relative spectrum change after each cycle
        trace_growth: tr(R̂(t)) / tr(R̂(0)) after each cycle
    """

    r_hat: CovarianceMatrix
    lambda_hat: np.ndarray
    x_hat: np.ndarray
    iteration: int = 0
    active: Optional[np.ndarray] = None
    spectrum_changes: Tuple[float, ...] = ()
    trace_growth: Tuple[float, ...] = ()

    def spectrum_values(self, num_antennas: int) -> np.ndarray:
        """P_i = tr(Λ̂_i) / N_R; the trace is real and non-negative."""
        return np.einsum("gll->g", self.lambda_hat).real.clip(min=0.0) / num_antennas

    def replace(self, **changes) -> "IsrState":
        return dataclasses.replace(self, **changes)


def isr_init(batch: SampleBatch, sigma_v2: float, num_points: int = 0) -> IsrState:
    """R̂(0) = block-diagonal SCM + σ_v² I; x̂ and Λ̂ start at zero."""
    if not sigma_v2 > 0:
        raise ValidationError("ISR needs a positive noise power")
    r0 = block_diag_scm(batch).with_loading(sigma_v2)
    n_l = batch.num_nodes
    return IsrState(
        r_hat=r0,
        lambda_hat=np.zeros((num_points, n_l, n_l), dtype=complex),
        x_hat=np.zeros((num_points, n_l, batch.num_samples), dtype=complex),
        iteration=0,
        active=np.ones(num_points, dtype=bool),
    )


def _factorize(covariance: CovarianceMatrix):
    try:
        return cho_factor(covariance.matrix, lower=True)
    except LinAlgError as e:
        raise NumericalSingularityError(f"R̂ is not positive definite: {e}") from e


def wls_estimate(steering_matrix: np.ndarray, covariance: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Single-point weighted least squares (Aᴴ C⁻¹ A)⁻¹ Aᴴ C⁻¹ y.

    `covariance` may be R̂ or the interference-plus-noise covariance
    R̂ − A Λ Aᴴ; both give the same estimate.
    """
    factor = cho_factor(covariance, lower=True)
    weighted = cho_solve(factor, steering_matrix)                  # C⁻¹ A
    gram = steering_matrix.conj().T @ weighted
    return np.linalg.solve(gram, weighted.conj().T @ y)


def _hermitian(matrices: np.ndarray) -> np.ndarray:
    return 0.5 * (matrices + matrices.conj().transpose(0, 2, 1))


def _weighted_products(
    state: IsrState,
    batch: SampleBatch,
    steering: SteeringSet,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Active grid indices with A_iᴴ R̂⁻¹ A_i (G, L, L) and A_iᴴ R̂⁻¹ y(n) (G, L, N_s).
    """
    factor = _factorize(state.r_hat)
    active = state.active if state.active is not None else np.ones(steering.num_points, dtype=bool)
    index = np.flatnonzero(active)
    n_l = steering.num_nodes
    if index.size == 0:
        return index, np.zeros((0, n_l, n_l), dtype=complex), np.zeros((0, n_l, batch.num_samples), dtype=complex)

    a = steering.stacked[:, index, :]                              # (M, G, L)
    m = a.shape[0]
    weighted = cho_solve(factor, a.reshape(m, -1)).reshape(a.shape)  # R̂⁻¹ A_i
    gram = _hermitian(np.einsum("mgl,mgk->glk", a.conj(), weighted))
    rhs = np.einsum("mgl,mn->gln", weighted.conj(), batch.snapshots)
    return index, gram, rhs


def _solve_wls(
    index: np.ndarray,
    gram: np.ndarray,
    rhs: np.ndarray,
    num_points: int,
    iteration: int,
    ill_conditioned: float,
    diagnostics: Optional[List[str]],
) -> np.ndarray:
    x_hat = np.zeros((num_points,) + rhs.shape[1:], dtype=complex)
    if index.size == 0:
        return x_hat

    conditions = np.linalg.cond(gram)
    bad = ~(conditions <= ill_conditioned)
    solved = np.empty_like(rhs)
    if (~bad).any():
        solved[~bad] = np.linalg.solve(gram[~bad], rhs[~bad])
    for g in np.flatnonzero(bad):
        solved[g] = np.linalg.lstsq(gram[g], rhs[g], rcond=None)[0]
    if bad.any() and diagnostics is not None:
        diagnostics.append(
            f"isr iteration {iteration}: {int(bad.sum())} ill-conditioned grid point(s), "
            f"first {int(index[np.flatnonzero(bad)[0]])}; solved by least squares"
        )
    x_hat[index] = solved
    return x_hat


def isr_update_x(
    state: IsrState,
    batch: SampleBatch,
    steering: SteeringSet,
    ill_conditioned: float = ILL_CONDITIONED,
    diagnostics: Optional[List[str]] = None,
) -> np.ndarray:
    """
    WLS source estimates for every grid point and sample.

    Returns:
        x̂ with shape (N_G, L, N_s); inactive points stay zero
    """
    index, gram, rhs = _weighted_products(state, batch, steering)
    return _solve_wls(index, gram, rhs, steering.num_points, state.iteration + 1, ill_conditioned, diagnostics)


def isr_update_lambda(state: IsrState) -> np.ndarray:
    """Λ̂_i = (1/N_s) Σ_n x̂_i(n) x̂_i(n)ᴴ, shape (N_G, L, L)."""
    x_hat = state.x_hat
    lam = np.einsum("gln,gkn->glk", x_hat, x_hat.conj()) / x_hat.shape[2]
    return _hermitian(lam)


def nearest_psd(matrices: np.ndarray) -> np.ndarray:
    """Hermitian part of each matrix with negative eigenvalues set to zero."""
    values, vectors = np.linalg.eigh(_hermitian(matrices))
    return (vectors * values.clip(min=0.0)[:, None, :]) @ vectors.conj().transpose(0, 2, 1)


def isr_update_lambda_posterior(
    state: IsrState,
    gram: np.ndarray,
    rhs: np.ndarray,
    index: np.ndarray,
    relaxation: float = DEFAULT_RELAXATION,
) -> np.ndarray:
    """
    Over-relaxed posterior update of Λ̂ for the active grid points.

    Args:
        state: Current iterate; its Λ̂ is the prior
        gram: A_iᴴ R̂⁻¹ A_i for the active points
        rhs: A_iᴴ R̂⁻¹ y(n) for the active points, equal to gram @ x̂_i
        index: Active grid indices
        relaxation: Step factor ω; 1 is the plain posterior update

    Returns:
        Λ̂ with shape (N_G, L, L); inactive points are zero
    """
    lam = np.zeros_like(state.lambda_hat)
    if index.size == 0:
        return lam
    prior = state.lambda_hat[index]
    mu = prior @ rhs                                               # posterior means
    second = mu @ mu.conj().transpose(0, 2, 1) / rhs.shape[2]
    posterior = second + prior - prior @ gram @ prior
    lam[index] = nearest_psd(prior + relaxation * (posterior - prior))
    return lam


def calibrate_energy(lambda_hat: np.ndarray, batch: SampleBatch, sigma_v2: float) -> np.ndarray:
    """
    Rescale Λ̂ so Σ_i tr(Λ̂_i) = tr(SCM) − N_R·L·σ_v².

    Steering columns have unit norm, so Σ_i tr(Λ̂_i) is the signal energy
    of the reconstruction. Λ̂ is returned unchanged when either side is
    not positive.
    """
    excess = float(np.sum(np.abs(batch.snapshots) ** 2)) / batch.num_samples - batch.dimension * sigma_v2
    total = float(np.einsum("gll->", lambda_hat).real)
    if excess <= 0 or total <= 0:
        return lambda_hat
    return lambda_hat * (excess / total)


def isr_update_r(state: IsrState, steering: SteeringSet, sigma_v2: float) -> CovarianceMatrix:
    """R̂ = Σ_i A_i Λ̂_i A_iᴴ + σ_v² I."""
    index = np.flatnonzero(state.active) if state.active is not None else np.arange(steering.num_points)
    m = steering.dimension
    a = steering.stacked[:, index, :]
    scaled = np.einsum("mgl,glk->mgk", a, state.lambda_hat[index])
    matrix = scaled.reshape(m, -1) @ a.reshape(m, -1).conj().T
    matrix += sigma_v2 * np.eye(m)
    return CovarianceMatrix(matrix, "isr_reconstructed")


def _first_non_finite(values: np.ndarray) -> Optional[int]:
    finite = np.isfinite(values).reshape(values.shape[0], -1).all(axis=1)
    return None if finite.all() else int(np.flatnonzero(~finite)[0])


def _trace(covariance: CovarianceMatrix) -> float:
    return float(np.trace(covariance.matrix).real)


def isr_spectrum(
    batch: SampleBatch,
    steering: SteeringSet,
    sigma_v2: float,
    termination: Optional[TerminationRule] = None,
    prune_threshold: Optional[float] = None,
    ill_conditioned: float = ILL_CONDITIONED,
    update: str = "posterior",
    relaxation: float = DEFAULT_RELAXATION,
    growth_limit: Optional[float] = GROWTH_LIMIT,
) -> Tuple[PowerSpectrum, IsrState]:
    """
    Run the cyclic updates until the termination rule fires.

    Args:
        batch: Snapshots
        steering: Grid steering set
        sigma_v2: Known noise power σ_v²
        termination: Iteration cap and relative-change tolerance
        prune_threshold: If set, grid points with tr(Λ̂_i) below this fraction
            of the largest trace are frozen at zero
        ill_conditioned: Condition number above which a point is solved by
            least squares and reported
        update: Λ̂ update rule, 'posterior' or 'sample'
        relaxation: Step factor of the posterior update, in (0, 2]
        growth_limit: Stop once tr(R̂) exceeds this multiple of tr(R̂(0));
            None disables the guard

    Raises:
        IterationDivergenceError: A non-finite value appeared
    """
    termination = termination or TerminationRule()
    if batch.dimension != steering.dimension:
        raise ValidationError("batch and steering set disagree on array layout")
    if update not in UPDATE_RULES:
        raise ValidationError(f"unknown ISR update '{update}', expected one of {UPDATE_RULES}")
    if not 0 < relaxation <= 2:
        raise ValidationError("relaxation must lie in (0, 2]")
    if growth_limit is not None and not growth_limit > 1:
        raise ValidationError("growth_limit must be greater than 1")

    n_r = steering.num_antennas
    diagnostics: List[str] = []
    state = isr_init(batch, sigma_v2, steering.num_points)
    initial_trace = _trace(state.r_hat)
    previous = None
    changes: List[float] = []
    growth: List[float] = []

    for t in range(1, termination.max_iterations + 1):
        index, gram, rhs = _weighted_products(state, batch, steering)
        x_hat = _solve_wls(index, gram, rhs, steering.num_points, t, ill_conditioned, diagnostics)
        bad = _first_non_finite(x_hat)
        if bad is not None:
            raise IterationDivergenceError(t, bad, "source estimate")
        state = state.replace(x_hat=x_hat)

        if update == "sample":
            lambda_hat = isr_update_lambda(state)
        elif t == 1:
            lambda_hat = calibrate_energy(isr_update_lambda(state), batch, sigma_v2)
        else:
            lambda_hat = isr_update_lambda_posterior(state, gram, rhs, index, relaxation)
        state = state.replace(lambda_hat=lambda_hat)
        r_hat = isr_update_r(state, steering, sigma_v2)
        if not np.all(np.isfinite(r_hat.matrix)):
            raise IterationDivergenceError(t, _first_non_finite(lambda_hat) or 0, "covariance")

        values = state.spectrum_values(n_r)
        if previous is not None and np.linalg.norm(previous) > 0:
            change = float(np.linalg.norm(values - previous) / np.linalg.norm(previous))
        else:
            change = float("inf")
        changes.append(change)
        growth.append(_trace(r_hat) / initial_trace)

        active = state.active
        if prune_threshold is not None and values.max() > 0:
            active = active & (values >= prune_threshold * values.max())

        state = state.replace(r_hat=r_hat, iteration=t, active=active,
                              spectrum_changes=tuple(changes), trace_growth=tuple(growth))
        if growth_limit is not None and growth[-1] > growth_limit:
            diagnostics.append(
                f"isr iteration {t}: tr(R̂) grew to {growth[-1]:.3g}x its initial value; stopped"
            )
            break
        if change < termination.tol:
            break
        previous = values

    spectrum = PowerSpectrum(state.spectrum_values(n_r), steering.grid, "isr", state.iteration, diagnostics)
    return spectrum, state


class IsrEstimator(BaseEstimator):
    """Iterative sparse recovery"""

    def get_name(self) -> str:
        return "isr"

    def termination(self) -> TerminationRule:
        return TerminationRule(
            int(self.config.get("max_iterations", 30)),
            float(self.config.get("tol", 1e-3)),
        )

    def estimate(self, batch: SampleBatch, steering: SteeringSet, scenario: Scenario) -> PowerSpectrum:
        prune = self.config.get("prune_threshold")
        growth_limit = self.config.get("growth_limit", GROWTH_LIMIT)
        spectrum, state = isr_spectrum(
            batch,
            steering,
            scenario.assumed_noise_power,
            self.termination(),
            None if prune is None else float(prune),
            float(self.config.get("ill_conditioned", ILL_CONDITIONED)),
            str(self.config.get("update", "posterior")),
            float(self.config.get("relaxation", DEFAULT_RELAXATION)),
            None if growth_limit is None else float(growth_limit),
        )
        if state.spectrum_changes:
            trace = ", ".join(f"{c:.3g}" for c in state.spectrum_changes)
            spectrum.diagnostics.append(f"isr stopped after {state.iteration} iteration(s); changes: {trace}")
        return spectrum
