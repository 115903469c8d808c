"""
Scenario files: YAML <-> Scenario.

A scenario file describes nodes, targets, the search grid, the noise level,
the sample count and the seed. Short forms are accepted (2-D positions,
shared array settings, SNR instead of noise power); save_scenario always
writes the fully explicit form so files round-trip.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from core.env_loader import PROJECT_ROOT, get_env_path
from core.errors import LocalizationError, ScenarioError
from core.geometry import AXIS_TOLERANCE, SearchGrid, SensingNode, as_point
from core.synth import (
    DEFAULT_SUBCARRIER_SPACING_HZ,
    DEFAULT_TONE_BINS,
    SEED_LIMIT,
    Scenario,
    TargetSource,
    noise_power_for_snr,
)

SCENARIO_DIR = PROJECT_ROOT / "scenarios"


class _Reader:
    """Typed access to a nested dict, reporting the dotted key path on failure."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, message: str):
        raise ScenarioError(message, self.source, path)

    def require(self, data: Dict, key: str, path: str) -> Any:
        if not isinstance(data, dict) or key not in data:
            self.fail(path + key if not path else f"{path}.{key}", "missing required key")
        return data[key]

    def number(self, value: Any, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        return float(value)

    def integer(self, value: Any, path: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        return int(value)

    def vector(self, value: Any, path: str, sizes=(2, 3)) -> List[float]:
        if not isinstance(value, (list, tuple)) or len(value) not in sizes:
            self.fail(path, f"expected {' or '.join(map(str, sizes))} numbers, got {value!r}")
        return [self.number(v, f"{path}[{i}]") for i, v in enumerate(value)]

    def items(self, value: Any, path: str) -> List:
        if not isinstance(value, list):
            self.fail(path, f"expected a list, got {type(value).__name__}")
        return value


def resolve_scenario_path(name: Union[str, Path]) -> Path:
    """
    Accept a path, or a bare name looked up in ISR_SCENARIO_DIR / scenarios/.
    """
    path = Path(name)
    if path.exists():
        return path
    directory = get_env_path("ISR_SCENARIO_DIR", SCENARIO_DIR)
    for candidate in (directory / path, directory / f"{path}.yaml"):
        if candidate.exists():
            return candidate
    raise ScenarioError("scenario file not found", str(name))


def _parse_grid(reader: _Reader, data: Dict) -> SearchGrid:
    kind = data.get("kind", "line")
    step_path = "grid.step"
    if kind == "line":
        start = reader.vector(reader.require(data, "start", "grid"), "grid.start")
        stop = reader.vector(reader.require(data, "stop", "grid"), "grid.stop")
        step = reader.number(reader.require(data, "step", "grid"), step_path)
        if step <= 0:
            reader.fail(step_path, "step must be positive")
        return SearchGrid.line(start, stop, step)
    if kind == "rectangle":
        x = reader.vector(reader.require(data, "x", "grid"), "grid.x", (2,))
        y = reader.vector(reader.require(data, "y", "grid"), "grid.y", (2,))
        step = reader.number(reader.require(data, "step", "grid"), step_path)
        if step <= 0:
            reader.fail(step_path, "step must be positive")
        if x[1] < x[0] or y[1] < y[0]:
            reader.fail("grid", "rectangle ranges must be increasing")
        return SearchGrid.rectangle(x, y, step, reader.number(data.get("z", 0.0), "grid.z"))
    if kind == "points":
        points = reader.items(reader.require(data, "points", "grid"), "grid.points")
        return SearchGrid.from_points(
            [reader.vector(p, f"grid.points[{i}]") for i, p in enumerate(points)]
        )
    reader.fail("grid.kind", f"unknown grid kind '{kind}' (line, rectangle, points)")


def scenario_from_dict(data: Dict, source: str = "<dict>") -> Scenario:
    """
    Build and validate a Scenario from parsed YAML.

    Raises:
        ScenarioError: With the source and the dotted key path of the problem
    """
    reader = _Reader(source)
    if not isinstance(data, dict):
        reader.fail("", "scenario must be a mapping")

    array = data.get("array", {}) or {}
    num_antennas = reader.integer(array.get("num_antennas", 64), "array.num_antennas")
    spacing = reader.number(array.get("spacing_over_wavelength", 0.5), "array.spacing_over_wavelength")
    height = reader.number(array.get("height", 0.0), "array.height")
    default_axis = reader.vector(array.get("axis", [1.0, 0.0, 0.0]), "array.axis", (3,))

    nodes = []
    for i, entry in enumerate(reader.items(reader.require(data, "nodes", ""), "nodes")):
        path = f"nodes[{i}]"
        position = as_point(reader.vector(reader.require(entry, "position", path), f"{path}.position"), z=height)
        axis = np.asarray(reader.vector(entry.get("axis", default_axis), f"{path}.axis", (3,)))
        norm = np.linalg.norm(axis)
        if norm == 0:
            reader.fail(f"{path}.axis", "axis must be nonzero")
        if abs(norm - 1.0) > AXIS_TOLERANCE:
            axis = axis / norm
        try:
            nodes.append(SensingNode(
                position,
                axis,
                reader.integer(entry.get("num_antennas", num_antennas), f"{path}.num_antennas"),
                reader.number(entry.get("spacing_over_wavelength", spacing), f"{path}.spacing_over_wavelength"),
            ))
        except LocalizationError as e:
            reader.fail(path, str(e))

    signal = data.get("signal", {}) or {}
    waveform = signal.get("waveform", "tone")
    targets = []
    for k, entry in enumerate(reader.items(data.get("targets", []) or [], "targets")):
        path = f"targets[{k}]"
        position = reader.vector(reader.require(entry, "position", path), f"{path}.position")
        variances = entry.get("channel_variances", [1.0] * len(nodes))
        variances = [reader.number(v, f"{path}.channel_variances[{l}]")
                     for l, v in enumerate(reader.items(variances, f"{path}.channel_variances"))]
        try:
            targets.append(TargetSource(
                as_point(position),
                variances,
                entry.get("waveform", waveform),
                reader.integer(entry.get("frequency_index", k + 1), f"{path}.frequency_index"),
            ))
        except LocalizationError as e:
            reader.fail(path, str(e))

    seed = reader.integer(data.get("seed", 0), "seed")
    if not 0 <= seed < SEED_LIMIT:
        reader.fail("seed", f"seed must lie in [0, 2**64), got {seed}")

    try:
        grid = _parse_grid(reader, reader.require(data, "grid", ""))
    except ScenarioError:
        raise
    except LocalizationError as e:
        reader.fail("grid", str(e))

    snr_db = signal.get("snr_db")
    noise_power = signal.get("noise_power")
    if snr_db is not None:
        snr_db = reader.number(snr_db, "signal.snr_db")
    if noise_power is not None:
        noise_power = reader.number(noise_power, "signal.noise_power")
    if noise_power is None:
        if snr_db is None:
            reader.fail("signal", "give snr_db or noise_power")
        if not targets:
            reader.fail("signal.snr_db", "snr_db needs at least one target; give noise_power instead")
        noise_power = noise_power_for_snr(targets, snr_db)

    try:
        return Scenario(
            nodes=nodes,
            targets=targets,
            grid=grid,
            noise_power=noise_power,
            num_samples=reader.integer(reader.require(data, "num_samples", ""), "num_samples"),
            seed=seed,
            snr_db=snr_db,
            tone_bins=reader.integer(signal.get("tone_bins", DEFAULT_TONE_BINS), "signal.tone_bins"),
            subcarrier_spacing_hz=reader.number(
                signal.get("subcarrier_spacing_hz", DEFAULT_SUBCARRIER_SPACING_HZ), "signal.subcarrier_spacing_hz"
            ),
            redraw_channels_per_sample=bool(signal.get("redraw_channels_per_sample", False)),
            name=str(data.get("name", Path(source).stem)),
            description=str(data.get("description", "")),
            extras={key: data[key] for key in ("trials", "full_scale_trials", "sweep") if key in data},
        )
    except ScenarioError:
        raise
    except LocalizationError as e:
        reader.fail("", str(e))


def scenario_to_dict(scenario: Scenario) -> Dict:
    """Fully explicit, YAML-safe form of a scenario."""
    data = {
        "name": scenario.name,
        "description": scenario.description,
        "seed": scenario.seed,
        "num_samples": scenario.num_samples,
        "nodes": [
            {
                "position": node.position.tolist(),
                "axis": node.axis.tolist(),
                "num_antennas": node.num_antennas,
                "spacing_over_wavelength": node.spacing_over_wavelength,
            }
            for node in scenario.nodes
        ],
        "targets": [
            {
                "position": target.position.tolist(),
                "channel_variances": target.channel_variances.tolist(),
                "waveform": target.waveform,
                "frequency_index": target.frequency_index,
            }
            for target in scenario.targets
        ],
        "grid": dict(scenario.grid.descriptor),
        "signal": {
            "noise_power": scenario.noise_power,
            "snr_db": scenario.snr_db,
            "tone_bins": scenario.tone_bins,
            "subcarrier_spacing_hz": scenario.subcarrier_spacing_hz,
            "redraw_channels_per_sample": scenario.redraw_channels_per_sample,
        },
    }
    if data["signal"]["snr_db"] is None:
        del data["signal"]["snr_db"]
    data.update(scenario.extras)
    return data


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read, parse and validate a scenario file."""
    path = resolve_scenario_path(path)
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError(f"YAML syntax error at {where}", str(path))
    return scenario_from_dict(data, str(path))


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(scenario_to_dict(scenario), f, sort_keys=False)
    return path


def scenario_trials(scenario: Scenario, full_scale: bool = False, default: Optional[int] = None) -> Optional[int]:
    """Trial count carried by the scenario file (full_scale_trials under --paper-scale)."""
    key = "full_scale_trials" if full_scale else "trials"
    value = scenario.extras.get(key)
    return int(value) if value is not None else default
