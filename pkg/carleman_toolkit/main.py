"""
Main entry point for the Carleman Toolkit CLI.
"""

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from rich.console import Console
from rich.logging import RichHandler

from . import report
from .config import ExperimentConfig, load_config
from .exceptions import AuditError, CarlemanError
from .geometry import cone_growth_radius, make_cap, make_cone, manufacture
from .reconstruct import ReconstructionConfig, audit, bound_M, cauchy_data, quadrature_floor, sweep_probe
from .selftest import GROUPS, require_pass, run_checks

logger = logging.getLogger("carleman_toolkit")

console = Console()

LOG_ENV = "CARLEMAN_LOG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def configure_logging():
    """Root logger through RichHandler; level from CARLEMAN_LOG, WARNING by default."""
    requested = os.environ.get(LOG_ENV, "WARNING").upper()
    level = requested if requested in LOG_LEVELS else "WARNING"
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]",
                        handlers=[RichHandler(console=Console(stderr=True), show_path=False)], force=True)
    if requested != level:
        logger.warning("unknown %s value '%s', using WARNING", LOG_ENV, requested)


def _geometry(cfg: ExperimentConfig):
    spec = cfg.domain
    if spec.branch == "cap":
        return make_cap(spec.radius, spec.resolution)
    return make_cone(spec.rho_e, spec.radius, spec.resolution)


def run_reconstruct(cfg: ExperimentConfig, out_dir: Path):
    """
    Sweep every probe over the tau and delta grids, audit the errors and write
    results.csv and audit.json into out_dir.

    Returns:
        tuple: (results frame, audit payload).
    """
    started = time.perf_counter()
    medium = cfg.medium

    console.print("\n[bold cyan][Step 1: Geometry and manufactured solution][/bold cyan]")
    domain, surface, sigma = _geometry(cfg)
    solution = manufacture(domain, medium, cfg.sources.count, cfg.sources.seed)
    exact_data = cauchy_data(solution, surface)
    M = bound_M(solution, sigma) if cfg.sweep.M == "auto" else cfg.sweep.M
    console.print(f"Branch:              [yellow]{domain.branch}[/yellow] (x3^0 = {domain.x3_max:.4g})")
    console.print(f"Nodes on S / Sigma:  {len(surface)} / {len(sigma)}")
    console.print(f"Wave numbers k_l:    {', '.join(f'{k:.4g}' for k in medium.waves.k)}")
    console.print(f"Bound M on Sigma:    [green]{M:.6g}[/green]")

    rcfg = ReconstructionConfig(domain, medium, surface, cfg.probes, M=M, cone_quad=cfg.quadrature)
    closed = surface + sigma

    console.print(f"\n[bold cyan][Step 2: Sweep over {len(cfg.probes)} probes][/bold cyan]")
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [
            pool.submit(sweep_probe, i, x, solution, exact_data, rcfg, list(cfg.sweep.tau),
                        list(cfg.sweep.delta), cfg.sources.seed)
            for i, x in enumerate(cfg.probes)
        ]
        sweeps = []
        for i, future in enumerate(futures):
            try:
                sweeps.append(future.result())
            except CarlemanError as exc:
                exc.diagnostics.setdefault("probe", i)
                raise

    rows = []
    for sweep in sweeps:
        floor = quadrature_floor(sweep.probe, solution, closed, medium)
        distance = float(domain.distance_to_boundary(sweep.probe)[0])
        for row in sweep.rows:
            rows.append({**row, "floor": floor, "min_distance": distance, "nodes": len(surface)})
    frame = report.results_frame(rows, experiment_id=cfg.experiment_id, branch=domain.branch,
                                 seed=cfg.sources.seed)
    console.print(f"Result rows:         {len(frame)}")

    console.print("\n[bold cyan][Step 3: Stability audit][/bold cyan]")
    reports = []
    for sweep in sweeps:
        fixed = [r for r in sweep.rows if not r["tau_auto"]]
        smallest = min((r["delta"] for r in fixed), default=0.0)
        fixed = [r for r in fixed if r["delta"] == smallest]
        auto = [r for r in sweep.rows if r["tau_auto"]]
        radius = cone_growth_radius(surface, sweep.probe, domain.rho_e) if domain.branch == "cone" else None
        try:
            reports.append(audit(
                domain, sweep.probe, M,
                taus=[r["tau"] for r in fixed], tau_errors=[r["error_abs"] for r in fixed],
                deltas=[r["delta"] for r in auto], delta_errors=[r["error_abs"] for r in auto],
                tolerances=cfg.tolerances, growth_radius=radius,
            ))
        except AuditError as exc:
            logger.warning("probe %d not audited: %s", sweep.index, exc)
    if reports:
        report.print_audit(reports)

    payload = report.audit_payload(cfg.experiment_id, domain.branch, cfg.sources.seed, M, reports)
    results_path = report.write_results(frame, out_dir / "results.csv")
    audit_path = report.write_audit(payload, out_dir / "audit.json")
    logger.info("reconstruct finished in %.2f s", time.perf_counter() - started)
    console.print(f"\n[dim]Results saved to: {results_path}[/dim]")
    console.print(f"[dim]Audit saved to:   {audit_path}[/dim]")
    return frame, payload


def run_table(in_path: Path, out_path: Optional[Path] = None):
    frame = report.load_results(in_path)
    long_frame, summary = report.convergence_table(frame)
    report.print_convergence(summary)
    out_path = out_path or in_path.with_name("convergence.csv")
    report.write_convergence(long_frame, out_path)
    console.print(f"\n[dim]Plot-ready table saved to: {out_path}[/dim]")
    return long_frame, summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Carleman Toolkit: regularised continuation for couple-stress elasticity."
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Subcommand: selftest
    parser_selftest = subparsers.add_parser("selftest", help="Run the reference checks")
    parser_selftest.add_argument("--filter", type=str, choices=GROUPS, default=None,
                                 help="Run only one group of checks")

    # Subcommand: reconstruct
    parser_reconstruct = subparsers.add_parser("reconstruct", help="Run a tau/delta sweep from a JSON config")
    parser_reconstruct.add_argument("--config", type=str, required=True,
                                    help="Config file, or a shipped config name (cap, cone)")
    parser_reconstruct.add_argument("--out", type=str, default=None, help="Output directory (default: from config)")
    parser_reconstruct.add_argument("--seed", type=int, default=None, help="Override sources.seed")
    parser_reconstruct.add_argument("--threads", type=int, default=None, help="Override threads")

    # Subcommand: table
    parser_table = subparsers.add_parser("table", help="Convergence table from a results.csv")
    parser_table.add_argument("--in", dest="in_path", type=str, required=True, help="results.csv to read")
    parser_table.add_argument("--out", type=str, default=None,
                              help="Plot-ready CSV (default: convergence.csv next to the input)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()

    try:
        if args.command == "selftest":
            results = run_checks(args.filter)
            report.print_selftest(results)
            require_pass(results)
        elif args.command == "reconstruct":
            cfg = load_config(args.config, seed=args.seed, threads=args.threads)
            run_reconstruct(cfg, Path(args.out or cfg.output.directory))
        elif args.command == "table":
            run_table(Path(args.in_path), Path(args.out) if args.out else None)
        else:
            parser.print_help()
    except CarlemanError as exc:
        console.print(f"[bold red]Error:[/bold red] {exc}")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
