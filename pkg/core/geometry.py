"""
Array geometry for distributed sensing nodes.

Provides:
- SensingNode: one uniform linear array (ULA) at a known position
- SearchGrid: the candidate target positions (line, rectangle or explicit list)
- SteeringSet: per-grid-point, per-node steering vectors, i.e. the blocks of
  the block-diagonal steering matrices A_i

All coordinates are 3-vectors in meters. Targets and grid points sit at
z = 0 by default; node heights live in the node position's z component.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from core.errors import DegenerateGeometryError, ValidationError

AXIS_TOLERANCE = 1e-12
COINCIDENCE_TOLERANCE = 1e-12
STEP_TOLERANCE = 1e-9


def as_point(values: Sequence[float], z: float = 0.0) -> np.ndarray:
    """Return a float 3-vector; 2-D input gets the given z component."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 2:
        arr = np.array([arr[0], arr[1], z])
    if arr.size != 3:
        raise ValidationError(f"expected 2 or 3 coordinates, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class SensingNode:
    """
    A sensing node equipped with a uniform linear array.

    Args:
        position: Array reference position u_l (3-vector, meters)
        axis: Unit vector e_l along which the antennas lie
        num_antennas: Number of antennas N_R
        spacing_over_wavelength: Antenna spacing d/λ
    """

    position: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    num_antennas: int = 64
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        position = as_point(self.position)
        axis = np.asarray(self.axis, dtype=float).reshape(-1)
        if axis.size != 3:
            raise ValidationError("node axis must be a 3-vector")
        if abs(np.linalg.norm(axis) - 1.0) > AXIS_TOLERANCE:
            raise ValidationError(
                f"node axis must have unit norm, got |e| = {np.linalg.norm(axis):.15g}"
            )
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise ValidationError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        if not self.spacing_over_wavelength > 0:
            raise ValidationError("spacing_over_wavelength must be positive")

        position.setflags(write=False)
        axis.setflags(write=False)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "num_antennas", int(self.num_antennas))
        object.__setattr__(self, "spacing_over_wavelength", float(self.spacing_over_wavelength))

    def with_antennas(self, num_antennas: int) -> "SensingNode":
        return SensingNode(self.position, self.axis, num_antennas, self.spacing_over_wavelength)


def _step_count(span: float, step: float, what: str) -> int:
    """Number of steps in span; the step has to divide it."""
    ratio = span / step
    count = int(round(ratio))
    if abs(ratio - count) > STEP_TOLERANCE * max(1.0, ratio):
        raise ValidationError(f"grid step {step} does not divide the {what} {span:g}")
    return count


@dataclass(frozen=True, eq=False)
class SearchGrid:
    """
    Ordered set of candidate positions p̄_i.

    The descriptor records how the grid was generated; it drives peak
    adjacency (line: 2 neighbors, rectangle: 4 neighbors) and the grid step
    used as the resolution radius.
    """

    points: np.ndarray
    descriptor: Dict = field(default_factory=lambda: {"kind": "points"})

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValidationError(f"grid points must have shape (N_G, 3), got {points.shape}")
        if points.shape[0] < 1:
            raise ValidationError("grid needs at least one point")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise ValidationError("grid points must be pairwise distinct")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    # Factories

    @classmethod
    def line(cls, start: Sequence[float], stop: Sequence[float], step: float) -> "SearchGrid":
        """Evenly spaced points from start to stop (both included)."""
        p0, p1 = as_point(start), as_point(stop)
        if not step > 0:
            raise ValidationError("grid step must be positive")
        length = float(np.linalg.norm(p1 - p0))
        count = _step_count(length, step, "line length") + 1
        weights = np.linspace(0.0, 1.0, count)[:, None]
        points = p0[None, :] + weights * (p1 - p0)[None, :]
        descriptor = {
            "kind": "line",
            "start": p0.tolist(),
            "stop": p1.tolist(),
            "step": float(step),
        }
        return cls(points, descriptor)

    @classmethod
    def rectangle(
        cls,
        x_range: Sequence[float],
        y_range: Sequence[float],
        step: float,
        z: float = 0.0,
    ) -> "SearchGrid":
        """Row-major rectangle: index i = iy * nx + ix, x varies fastest."""
        if not step > 0:
            raise ValidationError("grid step must be positive")
        if x_range[1] < x_range[0] or y_range[1] < y_range[0]:
            raise ValidationError("rectangle ranges must be increasing")
        nx = _step_count(x_range[1] - x_range[0], step, "x range") + 1
        ny = _step_count(y_range[1] - y_range[0], step, "y range") + 1
        xs = np.linspace(x_range[0], x_range[1], nx)
        ys = np.linspace(y_range[0], y_range[1], ny)
        gx, gy = np.meshgrid(xs, ys)
        points = np.column_stack([gx.ravel(), gy.ravel(), np.full(nx * ny, float(z))])
        descriptor = {
            "kind": "rectangle",
            "x": [float(x_range[0]), float(x_range[1])],
            "y": [float(y_range[0]), float(y_range[1])],
            "step": float(step),
            "z": float(z),
        }
        return cls(points, descriptor)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "SearchGrid":
        arr = np.array([as_point(p) for p in points])
        return cls(arr, {"kind": "points", "points": arr.tolist()})

    # Accessors

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def kind(self) -> str:
        return self.descriptor.get("kind", "points")

    @property
    def shape(self) -> Tuple[int, ...]:
        """Array shape used for neighborhood operations."""
        if self.kind == "rectangle":
            step = self.descriptor["step"]
            nx = _step_count(self.descriptor["x"][1] - self.descriptor["x"][0], step, "x range") + 1
            ny = _step_count(self.descriptor["y"][1] - self.descriptor["y"][0], step, "y range") + 1
            return (ny, nx)
        return (len(self),)

    @property
    def step(self) -> float:
        """Grid spacing; for explicit point lists, the smallest neighbor gap."""
        if "step" in self.descriptor:
            return float(self.descriptor["step"])
        if len(self) < 2:
            return 0.0
        return float(np.min(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def nearest_index(self, position: Sequence[float]) -> int:
        return int(np.argmin(np.linalg.norm(self.points - as_point(position), axis=1)))


def direction_vector(node_position: Sequence[float], point: Sequence[float]) -> np.ndarray:
    """
    Unit vector pointing from a point towards a node.

    Args:
        node_position: Node position u_l
        point: Target or grid position p

    Returns:
        (u_l - p) / ||u_l - p||
    """
    offset = as_point(node_position) - as_point(point)
    distance = np.linalg.norm(offset)
    if distance <= COINCIDENCE_TOLERANCE:
        raise DegenerateGeometryError("point coincides with node position")
    return offset / distance


def steering_vector(node: SensingNode, point: Sequence[float]) -> np.ndarray:
    """
    ULA response of a node towards a position.

    Entry m is exp(j 2π (d/λ) m kᵀe_l) / sqrt(N_R), so the vector has unit norm.
    """
    cos_angle = float(direction_vector(node.position, point) @ node.axis)
    m = np.arange(node.num_antennas)
    phase = 2.0 * np.pi * node.spacing_over_wavelength * m * cos_angle
    return np.exp(1j * phase) / np.sqrt(node.num_antennas)


@dataclass(eq=False)
class SteeringSet:
    """
    Steering vectors for every (grid point, node) pair.

    vectors[i, l] is a_l(p̄_i), a complex N_R-vector. The block-diagonal
    matrix A_i of shape (N_R·L, L) is available through matrix(i), and the
    whole set as a dense (N_R·L, N_G, L) array through `stacked`.
    """

    vectors: np.ndarray
    grid: Optional[SearchGrid] = None

    @property
    def num_points(self) -> int:
        return self.vectors.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.vectors.shape[2]

    @property
    def dimension(self) -> int:
        return self.num_nodes * self.num_antennas

    def matrix(self, index: int) -> np.ndarray:
        """Block-diagonal A_i with unit-norm column blocks."""
        return block_diag(*[v[:, None] for v in self.vectors[index]])

    @cached_property
    def stacked(self) -> np.ndarray:
        """All A_i side by side: stacked[:, i, :] == matrix(i)."""
        n_g, n_l, n_r = self.vectors.shape
        dense = np.zeros((n_l * n_r, n_g, n_l), dtype=complex)
        for l in range(n_l):
            dense[l * n_r:(l + 1) * n_r, :, l] = self.vectors[:, l, :].T
        return dense

    def subset(self, indices: Sequence[int]) -> "SteeringSet":
        return SteeringSet(self.vectors[np.asarray(indices)], None)


def build_steering_set(nodes: List[SensingNode], grid: SearchGrid) -> SteeringSet:
    """
    Evaluate a_l(p̄_i) for every node and grid point.

    Raises:
        ValidationError: Nodes disagree on the number of antennas
        DegenerateGeometryError: A grid point coincides with a node
    """
    if not nodes:
        raise ValidationError("at least one sensing node is required")
    counts = {node.num_antennas for node in nodes}
    if len(counts) != 1:
        raise ValidationError(f"all nodes must share num_antennas, got {sorted(counts)}")
    n_r = counts.pop()

    positions = np.stack([node.position for node in nodes])          # (L, 3)
    axes = np.stack([node.axis for node in nodes])                    # (L, 3)
    spacing = np.array([node.spacing_over_wavelength for node in nodes])

    offsets = positions[None, :, :] - grid.points[:, None, :]         # (N_G, L, 3)
    distances = np.linalg.norm(offsets, axis=2)
    degenerate = np.argwhere(distances <= COINCIDENCE_TOLERANCE)
    if degenerate.size:
        i, l = (int(v) for v in degenerate[0])
        raise DegenerateGeometryError(
            f"grid point {i} coincides with node {l} position", grid_index=i
        )

    cos_angle = np.einsum("gld,ld->gl", offsets / distances[:, :, None], axes)
    m = np.arange(n_r)
    phase = 2.0 * np.pi * spacing[None, :, None] * cos_angle[:, :, None] * m[None, None, :]
    return SteeringSet(np.exp(1j * phase) / np.sqrt(n_r), grid)


def target_steering_set(nodes: List[SensingNode], positions: Sequence[Sequence[float]]) -> SteeringSet:
    """Steering vectors towards arbitrary positions, e.g. the true targets (duplicates allowed)."""
    vectors = np.array([[steering_vector(node, p) for node in nodes] for p in positions], dtype=complex)
    return SteeringSet(vectors.reshape(len(positions), len(nodes), -1), None)
