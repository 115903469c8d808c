"""
Artifact emission: CSV (the stable contract), SVG plots and text summaries.

CSV schemas:
- spectrum:  grid_index,x,y,z,value,estimator,iterations
- mse:       estimator,axis,axis_value,mse,std_error,resolve_rate,mean_resolved_fraction,trials,failures
- snapshots: sample,node,antenna,real,imag
"""

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import yaml  # noqa: E402

from core.metrics import MonteCarloReport  # noqa: E402
from core.scenario_loader import scenario_to_dict  # noqa: E402
from core.synth import SampleBatch, Scenario  # noqa: E402
from modules.base import PowerSpectrum  # noqa: E402

SPECTRUM_COLUMNS = ["grid_index", "x", "y", "z", "value", "estimator", "iterations"]
MSE_COLUMNS = ["estimator", "axis", "axis_value", "mse", "std_error", "resolve_rate",
               "mean_resolved_fraction", "trials", "failures"]
SNAPSHOT_COLUMNS = ["sample", "node", "antenna", "real", "imag"]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_spectrum_csv(spectrum: PowerSpectrum, path: Path) -> Path:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SPECTRUM_COLUMNS)
        for i, (point, value) in enumerate(zip(spectrum.grid.points, spectrum.values)):
            writer.writerow([i, _fmt(point[0]), _fmt(point[1]), _fmt(point[2]), _fmt(value),
                             spectrum.estimator, spectrum.iterations_run])
    return path


def read_spectrum_csv(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Return (points, values) from a spectrum CSV."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    points = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows])
    values = np.array([float(r["value"]) for r in rows])
    return points, values


def mse_rows(results: Sequence[Tuple[object, MonteCarloReport]], axis: str) -> List[Dict]:
    rows = []
    for value, report in results:
        for name, summary in report.per_estimator.items():
            rows.append({
                "estimator": name,
                "axis": axis,
                "axis_value": value,
                "mse": summary.mse,
                "std_error": summary.std_error,
                "resolve_rate": summary.resolve_rate,
                "mean_resolved_fraction": summary.mean_resolved_fraction,
                "trials": summary.trials,
                "failures": summary.failures,
            })
    rows.sort(key=lambda r: (r["estimator"], r["axis_value"]))
    return rows


def write_mse_csv(results: Sequence[Tuple[object, MonteCarloReport]], axis: str, path: Path) -> Path:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=MSE_COLUMNS)
        writer.writeheader()
        for row in mse_rows(results, axis):
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def write_snapshots_csv(batch: SampleBatch, path: Path) -> Path:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SNAPSHOT_COLUMNS)
        for n in range(batch.num_samples):
            for l in range(batch.num_nodes):
                for m, value in enumerate(batch.node_view(l)[:, n]):
                    writer.writerow([n + 1, l, m, _fmt(value.real), _fmt(value.imag)])
    return path


def write_run_record(scenario: Scenario, settings: Dict, path: Path) -> Path:
    """run.yaml: explicit scenario plus the effective run settings."""
    with open(path, "w") as f:
        yaml.safe_dump({"scenario": scenario_to_dict(scenario), "run": settings}, f, sort_keys=False)
    return path


def format_report(results: Sequence[Tuple[object, MonteCarloReport]], axis: str) -> str:
    """Human-readable summary of a Monte-Carlo run or sweep."""
    lines = []
    if results:
        echo = results[0][1].config_echo
        lines.append(f"Scenario: {echo.get('name') or '(unnamed)'}")
        lines.append(
            f"  nodes={echo['nodes']} targets={echo['targets']} N_R={echo['num_antennas']} "
            f"grid={echo['grid_points']} ({echo['grid_kind']}) seed={echo['seed']}"
        )
        if echo.get("snr_db") is not None:
            lines.append(f"  SNR={echo['snr_db']:.2f} dB  noise_power={echo['noise_power']:.6g}")
        lines.append("")
    header = f"{axis:>12}  {'estimator':<9} {'MSE (m^2)':>12} {'std err':>10} {'all res.':>8} {'res. frac':>9} {'fail':>5}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in sorted(mse_rows(results, axis), key=lambda r: (r["axis_value"], r["estimator"])):
        lines.append(
            f"{row['axis_value']:>12}  {row['estimator']:<9} {row['mse']:>12.6g} {row['std_error']:>10.3g} "
            f"{row['resolve_rate']:>8.2f} {row['mean_resolved_fraction']:>9.2f} {row['failures']:>5}"
        )
    for value, report in results:
        for name, summary in report.per_estimator.items():
            if summary.first_failure:
                lines.append(f"⚠️  {name} @ {axis}={value}: {summary.failures} failure(s), first: {summary.first_failure}")
    return "\n".join(lines) + "\n"


def format_spectrum_summary(spectra: Sequence[PowerSpectrum], peaks: Dict[str, List]) -> str:
    lines = []
    for spectrum in spectra:
        lines.append(f"{spectrum.estimator}: iterations={spectrum.iterations_run}")
        for peak in peaks.get(spectrum.estimator, []):
            x, y, z = peak.position
            lines.append(f"  peak #{peak.index:<6} at ({x:.3f}, {y:.3f}, {z:.3f})  value {peak.value:.6g}")
        for note in spectrum.diagnostics:
            lines.append(f"  note: {note}")
    return "\n".join(lines) + "\n"


def plot_spectrum_svg(spectrum: PowerSpectrum, truth: np.ndarray, path: Path,
                      title: Optional[str] = None) -> Path:
    """Line chart (dB, normalized) for line grids, heat map for rectangles."""
    grid = spectrum.grid
    with np.errstate(divide="ignore"):
        level_db = 10.0 * np.log10(spectrum.normalized())
    level_db = np.maximum(level_db, -60.0)

    fig, ax = plt.subplots(figsize=(7, 4.5) if grid.kind != "rectangle" else (5.5, 5))
    if grid.kind == "rectangle":
        ny, nx = grid.shape
        x, y = grid.descriptor["x"], grid.descriptor["y"]
        image = ax.imshow(level_db.reshape(ny, nx), origin="lower", extent=[x[0], x[1], y[0], y[1]],
                          cmap="viridis", aspect="equal")
        fig.colorbar(image, ax=ax, label="normalized power (dB)")
        if truth.size:
            ax.scatter(truth[:, 0], truth[:, 1], marker="x", color="red", label="targets")
            ax.legend(loc="upper right")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
    else:
        start = grid.points[0]
        distance = np.linalg.norm(grid.points - start, axis=1)
        ax.plot(distance + start[0], level_db, label=spectrum.estimator.upper())
        for t in truth:
            ax.axvline(np.linalg.norm(t - start) + start[0], color="red", linestyle="--", linewidth=0.8)
        ax.set_xlabel("position along grid (m)")
        ax.set_ylabel("normalized power (dB)")
        ax.grid(True, alpha=0.3)
    ax.set_title(title or f"{spectrum.estimator.upper()} spectrum")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_mse_svg(results: Sequence[Tuple[object, MonteCarloReport]], axis: str, path: Path) -> Path:
    rows = mse_rows(results, axis)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted({r["estimator"] for r in rows}):
        mine = [r for r in rows if r["estimator"] == name]
        ax.errorbar([r["axis_value"] for r in mine], [r["mse"] for r in mine],
                    yerr=[r["std_error"] for r in mine], marker="o", capsize=3, label=name.upper())
    if any(r["mse"] > 0 for r in rows):
        ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("MSE (m²)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
