"""
Module: Result Emission
Description: Fixed-schema results.csv, deterministic audit.json and the
             per-probe convergence table, plus the rich tables printed by the CLI.
"""

import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .exceptions import AuditError, ConfigError

logger = logging.getLogger(__name__)

console = Console()

# Column order of results.csv; documented in README.md.
RESULT_COLUMNS = [
    "experiment_id", "branch", "probe", "x1", "x2", "x3",
    "tau", "tau_auto", "delta", "M",
    "error_abs", "error_rel", "bound", "constant",
    "floor", "min_distance", "nodes", "seed",
]
CONVERGENCE_COLUMNS = ["branch", "probe", "x3", "axis", "grid", "log10_error", "slope"]
SUMMARY_COLUMNS = ["branch", "probe", "x3", "tau_points", "tau_slope", "delta_points", "delta_exponent"]
FLOAT_FORMAT = "%.10e"
SIGNIFICANT = 12
MIN_POINTS = 3


def results_frame(rows: Iterable[dict], **provenance) -> pd.DataFrame:
    """
    Rows of a sweep as a DataFrame in RESULT_COLUMNS order.

    Keyword arguments fill columns shared by every row (experiment_id, branch, seed, ...).
    The fitted constant is error_abs / bound where a bound exists.
    """
    frame = pd.DataFrame([{**provenance, **row} for row in rows])
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns and c != "constant"]
    if frame.empty:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    if missing:
        raise ValueError(f"result rows lack columns {missing}")
    bound = pd.to_numeric(frame["bound"], errors="coerce")
    frame["constant"] = frame["error_abs"] / bound
    return frame[RESULT_COLUMNS]


def write_results(frame: pd.DataFrame, path) -> Path:
    """Write results.csv with '.' decimals and a fixed float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame[RESULT_COLUMNS].to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %d result rows to %s", len(frame), path)
    return path


def load_results(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no results file '{path}'")
    frame = pd.read_csv(path)
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError(f"results file lacks columns {missing}", path=path.name)
    return frame


def _plain(value):
    """JSON-ready value with floats rounded to SIGNIFICANT digits and NaN as null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{SIGNIFICANT}g}")
    return value


def audit_payload(experiment_id: str, branch: str, seed: int, M: float, reports: Sequence,
                  extras: dict = None) -> dict:
    """Everything audit.json holds; `reports` are ErrorReport objects in probe order."""
    payload = {
        "experiment_id": experiment_id,
        "branch": branch,
        "seed": seed,
        "M": M,
        "probes": [r.to_dict() for r in reports],
        "passed": all(r.passed for r in reports),
    }
    payload.update(extras or {})
    return _plain(payload)


def write_audit(payload: dict, path) -> Path:
    """Sorted keys, two-space indent, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8")
    return path


def _slope(x, y) -> float:
    if len(x) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return float(slope)


def convergence_table(frame: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Per-probe log-errors versus tau and delta with fitted slopes.

    The tau axis uses fixed-tau rows at the smallest noise level of the probe; its
    slope is d log10(err) / d tau. The delta axis uses the "auto" rows; its slope is
    d log10(err) / d log10(delta), the fitted exponent.

    Returns:
        tuple: (long plot-ready frame in CONVERGENCE_COLUMNS, one summary row per probe).

    Raises:
        AuditError: A probe has fewer than three points on both axes.
    """
    long_rows: List[dict] = []
    summary: List[dict] = []
    if frame.empty:
        raise AuditError("no result rows to tabulate")
    auto = frame["tau_auto"].astype(str).str.lower() == "true"
    for (branch, probe), group in frame.groupby(["branch", "probe"], sort=True):
        group_auto = auto.loc[group.index]
        fixed = group[~group_auto]
        if not fixed.empty:
            fixed = fixed[fixed["delta"] == fixed["delta"].min()].sort_values("tau")
        noisy = group[group_auto & (group["delta"] > 0)].sort_values("delta")
        if len(fixed) < MIN_POINTS and len(noisy) < MIN_POINTS:
            raise AuditError("at least three sweep points are needed per probe",
                             branch=branch, probe=int(probe), taus=len(fixed), deltas=len(noisy))
        x3 = float(group["x3"].iloc[0])
        tau_log = np.log10(fixed["error_abs"].to_numpy(dtype=float))
        delta_grid = np.log10(noisy["delta"].to_numpy(dtype=float))
        delta_log = np.log10(noisy["error_abs"].to_numpy(dtype=float))
        tau_slope = _slope(fixed["tau"], tau_log) if len(fixed) >= MIN_POINTS else float("nan")
        exponent = _slope(delta_grid, delta_log) if len(noisy) >= MIN_POINTS else float("nan")
        for tau, value in zip(fixed["tau"], tau_log):
            long_rows.append({"branch": branch, "probe": int(probe), "x3": x3, "axis": "tau",
                              "grid": float(tau), "log10_error": float(value), "slope": tau_slope})
        for delta, value in zip(noisy["delta"], delta_log):
            long_rows.append({"branch": branch, "probe": int(probe), "x3": x3, "axis": "delta",
                              "grid": float(delta), "log10_error": float(value), "slope": exponent})
        summary.append({"branch": branch, "probe": int(probe), "x3": x3,
                        "tau_points": len(fixed), "tau_slope": tau_slope,
                        "delta_points": len(noisy), "delta_exponent": exponent})
    return (pd.DataFrame(long_rows, columns=CONVERGENCE_COLUMNS),
            pd.DataFrame(summary, columns=SUMMARY_COLUMNS))


def write_convergence(long_frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    long_frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _fmt(value, spec=".4g") -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return format(value, spec)


def print_convergence(summary: pd.DataFrame):
    for branch, group in summary.groupby("branch", sort=True):
        table = Table(title=f"[bold]Convergence ({branch})[/bold]", show_header=True, header_style="bold magenta")
        table.add_column("Probe", justify="right")
        table.add_column("x3", justify="right")
        table.add_column("tau pts", justify="right")
        table.add_column("d log10 err / d tau", justify="right", style="cyan")
        table.add_column("delta pts", justify="right")
        table.add_column("delta exponent", justify="right", style="green")
        for row in group.itertuples(index=False):
            table.add_row(str(row.probe), _fmt(row.x3), str(row.tau_points), _fmt(row.tau_slope),
                          str(row.delta_points), _fmt(row.delta_exponent))
        console.print(table)


def print_selftest(results: Sequence):
    """results: CheckResult objects from selftest.run_checks."""
    table = Table(title="[bold]Self-test[/bold]", show_header=True, header_style="bold magenta")
    table.add_column("Group", style="dim")
    table.add_column("Check")
    table.add_column("Measured", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    for result in results:
        status = "[bold green]PASS[/bold green]" if result.passed else "[bold red]FAIL[/bold red]"
        table.add_row(result.group, result.name, _fmt(result.measured, ".3e"), result.tolerance_text, status)
    console.print(table)


def print_audit(reports: Sequence):
    table = Table(title="[bold]Stability audit[/bold]", show_header=True, header_style="bold magenta")
    table.add_column("Probe")
    table.add_column("tau slope", justify="right")
    table.add_column("expected", justify="right")
    table.add_column("delta exponent", justify="right")
    table.add_column("expected", justify="right")
    table.add_column("C ratio", justify="right")
    table.add_column("R", justify="right")
    table.add_column("Status")
    for report in reports:
        status = "[bold green]PASS[/bold green]" if report.passed else "[bold yellow]CHECK[/bold yellow]"
        table.add_row(
            ", ".join(f"{c:.3g}" for c in report.probe),
            _fmt(report.tau_slope), _fmt(report.expected_slope),
            _fmt(report.delta_exponent), _fmt(report.expected_exponent),
            _fmt(report.constant_ratio), _fmt(report.growth_radius), status,
        )
    console.print(table)
