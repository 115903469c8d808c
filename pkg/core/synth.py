"""
Synthetic snapshot generation.

Builds y(n) = Σ_k A_k x_k(n) + v(n) for a scenario, node block 1 first,
with every random draw taken from a stream derived from (seed, trial).
"""

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.errors import ValidationError
from core.geometry import SearchGrid, SensingNode, as_point, target_steering_set
from utils.helpers import db_to_linear, linear_to_db

WAVEFORMS = ("tone", "qpsk")
DEFAULT_TONE_BINS = 64
DEFAULT_SUBCARRIER_SPACING_HZ = 312.5e3
SNR_TOLERANCE = 1e-9
NOISELESS_FLOOR = 1e-9
SEED_LIMIT = 2 ** 64


def make_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Independent generator for one trial; trial t never depends on t-1."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))
    return np.random.default_rng(sequence)


@dataclass(frozen=True, eq=False)
class TargetSource:
    """
    An emitting target.

    Args:
        position: p_k, meters
        channel_variances: σ²_{l,k} for each of the L nodes
        waveform: 'tone' (unit-modulus single carrier) or 'qpsk'
        frequency_index: Tone bin; the tone advances 2π·index/tone_bins per sample
    """

    position: np.ndarray
    channel_variances: np.ndarray
    waveform: str = "tone"
    frequency_index: int = 1

    def __post_init__(self):
        position = as_point(self.position)
        variances = np.asarray(self.channel_variances, dtype=float).reshape(-1)
        if variances.size == 0 or np.any(~(variances > 0)):
            raise ValidationError("channel variances must all be positive")
        if self.waveform not in WAVEFORMS:
            raise ValidationError(f"unknown waveform '{self.waveform}', expected one of {WAVEFORMS}")
        position.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "channel_variances", variances)
        object.__setattr__(self, "frequency_index", int(self.frequency_index))


def noise_power_for_snr(targets: Sequence[TargetSource], snr_db: float) -> float:
    """σ_v² such that mean_{l,k} σ²_{l,k} / σ_v² equals the requested SNR."""
    mean_variance = float(np.mean([t.channel_variances for t in targets]))
    return mean_variance / db_to_linear(snr_db)


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Full experiment description.

    noise_power = 0 means noiseless synthesis. A scenario without targets is
    allowed for noise-only runs; scoring needs at least one target.
    """

    nodes: List[SensingNode]
    targets: List[TargetSource]
    grid: SearchGrid
    noise_power: float
    num_samples: int
    seed: int = 0
    snr_db: Optional[float] = None
    tone_bins: int = DEFAULT_TONE_BINS
    subcarrier_spacing_hz: float = DEFAULT_SUBCARRIER_SPACING_HZ
    redraw_channels_per_sample: bool = False
    name: str = ""
    description: str = ""
    extras: Dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", list(self.nodes))
        object.__setattr__(self, "targets", list(self.targets))
        if not self.nodes:
            raise ValidationError("scenario needs at least one sensing node")
        if len({n.num_antennas for n in self.nodes}) != 1:
            raise ValidationError("all sensing nodes must share num_antennas")
        if int(self.num_samples) != self.num_samples or self.num_samples < 1:
            raise ValidationError(f"num_samples must be a positive integer, got {self.num_samples}")
        if not self.noise_power >= 0:
            raise ValidationError("noise_power must be non-negative")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed < SEED_LIMIT:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.tone_bins < 1:
            raise ValidationError("tone_bins must be positive")
        for k, target in enumerate(self.targets):
            if target.channel_variances.size != len(self.nodes):
                raise ValidationError(
                    f"target {k} has {target.channel_variances.size} channel variances, "
                    f"expected one per node ({len(self.nodes)})"
                )
        if self.snr_db is not None and self.targets:
            declared = db_to_linear(self.snr_db)
            if abs(self.snr - declared) > SNR_TOLERANCE * declared:
                raise ValidationError(
                    f"declared SNR {self.snr_db} dB disagrees with variances and noise power "
                    f"({self.derived_snr_db:.6f} dB)"
                )
        object.__setattr__(self, "num_samples", int(self.num_samples))
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_targets(self) -> int:
        return len(self.targets)

    @property
    def num_antennas(self) -> int:
        return self.nodes[0].num_antennas

    @property
    def dimension(self) -> int:
        return self.num_nodes * self.num_antennas

    @property
    def target_positions(self) -> np.ndarray:
        return np.array([t.position for t in self.targets]).reshape(-1, 3)

    @property
    def channel_variances(self) -> np.ndarray:
        """σ²_{l,k} as an (L, K) array."""
        return np.array([t.channel_variances for t in self.targets]).reshape(-1, self.num_nodes).T

    @property
    def snr(self) -> float:
        """(1/LK) Σ_l Σ_k σ²_{l,k} / σ_v²."""
        if not self.targets:
            return 0.0
        mean_variance = float(np.mean(self.channel_variances))
        return np.inf if self.noise_power == 0 else mean_variance / self.noise_power

    @property
    def derived_snr_db(self) -> float:
        return linear_to_db(self.snr) if 0 < self.snr < np.inf else (np.inf if self.snr else -np.inf)

    @property
    def assumed_noise_power(self) -> float:
        """Noise power handed to estimators; noiseless runs get a tiny floor."""
        if self.noise_power > 0:
            return self.noise_power
        mean_variance = float(np.mean(self.channel_variances)) if self.targets else 1.0
        return NOISELESS_FLOOR * mean_variance

    @property
    def sample_interval_s(self) -> float:
        return 1.0 / (self.tone_bins * self.subcarrier_spacing_hz)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_snr_db(self, snr_db: float) -> "Scenario":
        return self.replace(snr_db=float(snr_db), noise_power=noise_power_for_snr(self.targets, snr_db))

    def with_num_antennas(self, num_antennas: int) -> "Scenario":
        return self.replace(nodes=[n.with_antennas(int(num_antennas)) for n in self.nodes])

    def summary(self) -> Dict:
        return {
            "name": self.name,
            "nodes": self.num_nodes,
            "targets": self.num_targets,
            "num_antennas": self.num_antennas,
            "grid_points": len(self.grid),
            "grid_kind": self.grid.kind,
            "num_samples": self.num_samples,
            "noise_power": self.noise_power,
            "snr_db": self.derived_snr_db if self.targets else None,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """
    Stacked snapshots, one column per sample: snapshots[:, n] = y(n).

    Rows are ordered node by node, so rows l·N_R .. (l+1)·N_R - 1 hold y_l(n).
    `channels` keeps the realized α_{l,k} as (L, K), or (L, K, N_s) when
    channels are redrawn per sample.
    """

    snapshots: np.ndarray
    num_nodes: int
    channels: Optional[np.ndarray] = None
    waveforms: Optional[np.ndarray] = None
    trial: int = 0

    def __post_init__(self):
        snapshots = np.array(self.snapshots, dtype=complex, copy=True)
        if snapshots.ndim == 1:
            snapshots = snapshots[:, None]
        if snapshots.ndim != 2:
            raise ValidationError("snapshots must be a (N_R·L, N_s) array")
        if self.num_nodes < 1 or snapshots.shape[0] % self.num_nodes:
            raise ValidationError(
                f"snapshot length {snapshots.shape[0]} is not a multiple of {self.num_nodes} nodes"
            )
        snapshots.setflags(write=False)
        object.__setattr__(self, "snapshots", snapshots)

    @property
    def num_samples(self) -> int:
        return self.snapshots.shape[1]

    @property
    def dimension(self) -> int:
        return self.snapshots.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.dimension // self.num_nodes

    @property
    def node_slices(self) -> List[slice]:
        n_r = self.num_antennas
        return [slice(l * n_r, (l + 1) * n_r) for l in range(self.num_nodes)]

    def node_view(self, node: int) -> np.ndarray:
        """y_l(n) for all n, shape (N_R, N_s)."""
        return self.snapshots[self.node_slices[node]]

    def scaled(self, factor: complex) -> "SampleBatch":
        return SampleBatch(self.snapshots * factor, self.num_nodes, self.channels, self.waveforms, self.trial)


def draw_channel(rng: np.random.Generator, variances: Sequence[float]) -> np.ndarray:
    """
    Circularly-symmetric complex Gaussian coefficients, one per variance.

    Real and imaginary parts each carry half of the variance.
    """
    variances = np.asarray(variances, dtype=float)
    if np.any(~(variances > 0)):
        raise ValidationError("channel variances must all be positive")
    scale = np.sqrt(variances / 2.0)
    return scale * (rng.standard_normal(variances.shape) + 1j * rng.standard_normal(variances.shape))


def emit_waveform(
    target: TargetSource,
    n: int,
    rng: np.random.Generator,
    tone_bins: int = DEFAULT_TONE_BINS,
    initial_phase: Optional[float] = None,
) -> complex:
    """
    One unit-modulus sample s_k(n), n counted from 1.

    A tone reads its initial phase from `rng` without advancing it, so
    every n drawn against the same generator state lies on one coherent tone
    (the one `waveform_sequence` returns). QPSK consumes one draw per call.
    """
    if n < 1:
        raise ValidationError(f"sample index must be >= 1, got {n}")
    if target.waveform == "qpsk":
        return complex(np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4))))
    phase = copy.deepcopy(rng).uniform(0.0, 2.0 * np.pi) if initial_phase is None else initial_phase
    return complex(np.exp(1j * (2.0 * np.pi * target.frequency_index * n / tone_bins + phase)))


def waveform_sequence(
    target: TargetSource,
    num_samples: int,
    rng: np.random.Generator,
    tone_bins: int = DEFAULT_TONE_BINS,
) -> np.ndarray:
    """s_k(1) .. s_k(N_s); a tone draws its random initial phase once."""
    n = np.arange(1, num_samples + 1)
    if target.waveform == "qpsk":
        symbols = rng.integers(0, 4, size=num_samples)
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * symbols))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return np.exp(1j * (2.0 * np.pi * target.frequency_index * n / tone_bins + phase))


def synthesize(
    scenario: Scenario,
    trial: int = 0,
    channels: Optional[np.ndarray] = None,
) -> SampleBatch:
    """
    Draw one batch of N_s stacked snapshots.

    Draw order within a trial is fixed (channels, waveforms, noise) so a
    (seed, trial) pair always reproduces the same batch.

    Args:
        scenario: Validated scenario
        trial: Monte-Carlo trial index selecting the random stream
        channels: Optional (L, K) override of the channel coefficients

    Returns:
        SampleBatch with the realized channels attached
    """
    rng = make_rng(scenario.seed, trial)
    n_l, n_k, n_s, n_r = scenario.num_nodes, scenario.num_targets, scenario.num_samples, scenario.num_antennas
    dimension = n_l * n_r

    snapshots = np.zeros((dimension, n_s), dtype=complex)
    realized = None
    signals = None
    if n_k:
        # Degenerate geometry surfaces here, before any random draw.
        vectors = target_steering_set(scenario.nodes, scenario.target_positions).vectors  # (K, L, N_R)
        variances = scenario.channel_variances                          # (L, K)
        if channels is not None:
            realized = np.asarray(channels, dtype=complex).reshape(n_l, n_k)
            coefficients = np.repeat(realized[:, :, None], n_s, axis=2)
        elif scenario.redraw_channels_per_sample:
            realized = draw_channel(rng, np.repeat(variances[:, :, None], n_s, axis=2))
            coefficients = realized
        else:
            realized = np.stack([draw_channel(rng, variances[:, k]) for k in range(n_k)], axis=1)
            coefficients = np.repeat(realized[:, :, None], n_s, axis=2)

        signals = np.stack([
            waveform_sequence(target, n_s, rng, scenario.tone_bins) for target in scenario.targets
        ])                                                              # (K, N_s)
        blocks = np.sqrt(n_r) * np.einsum("klr,lkn,kn->lrn", vectors, coefficients, signals)
        snapshots += blocks.reshape(dimension, n_s)

    if scenario.noise_power > 0:
        scale = np.sqrt(scenario.noise_power / 2.0)
        snapshots += scale * (
            rng.standard_normal((dimension, n_s)) + 1j * rng.standard_normal((dimension, n_s))
        )

    return SampleBatch(snapshots, n_l, realized, signals, trial)
