import json
import logging

import pandas as pd
import pytest

from carleman_toolkit import carleman
from carleman_toolkit import main as cli
from carleman_toolkit.exceptions import SingularityError
from carleman_toolkit.report import CONVERGENCE_COLUMNS, RESULT_COLUMNS, results_frame, write_results
from tests.test_report import frame_for, make_rows

SMALL_CAP = {
    "schema_version": 1,
    "experiment_id": "cap-small",
    "material": {"lambda": 1.0, "mu": 1.0, "nu": 1.0, "beta": 1.0, "epsilon": 1.0,
                 "alpha": 0.5, "rho": 1.0, "theta": 1.0, "sigma": 2.0},
    "domain": {"branch": "cap", "radius": 1.0, "resolution": 12},
    "sources": {"count": 4, "seed": 5},
    "sweep": {"tau": [4.0, 8.0, 16.0, "auto"], "delta": [0.0, 0.01, 0.001, 0.0001], "M": "auto"},
    "probes": [[0.0, 0.0, 0.5], [0.0, 0.0, 0.6]],
    "output": {"directory": "unused"},
    "threads": 2,
}


def write_config(tmp_path, data, name="small.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_no_command_prints_help(capsys):
    assert cli.main([]) == 0


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv(cli.LOG_ENV, "debug")
    cli.configure_logging()
    assert logging.getLogger().level == logging.DEBUG
    monkeypatch.setenv(cli.LOG_ENV, "chatty")
    cli.configure_logging()
    assert logging.getLogger().level == logging.WARNING
    monkeypatch.delenv(cli.LOG_ENV)
    cli.configure_logging()
    assert logging.getLogger().level == logging.WARNING


class TestExitCodes:

    def test_invalid_config(self, tmp_path):
        bad = dict(SMALL_CAP, domain={"branch": "wedge", "radius": 1.0, "resolution": 12})
        assert cli.main(["reconstruct", "--config", str(write_config(tmp_path, bad))]) == 1

    def test_missing_config(self, tmp_path):
        assert cli.main(["reconstruct", "--config", str(tmp_path / "none.json")]) == 1

    def test_numerical_failure(self, tmp_path, monkeypatch):
        def fail(cfg, out_dir):
            raise SingularityError("probe on the boundary", r=0.0)

        monkeypatch.setattr(cli, "run_reconstruct", fail)
        assert cli.main(["reconstruct", "--config", str(write_config(tmp_path, SMALL_CAP))]) == 3

    def test_failure_names_the_probe(self, tmp_path, monkeypatch, capsys):
        def fail(index, *args):
            raise SingularityError("kernel evaluated at its pole", r=0.0)

        monkeypatch.setattr(cli, "sweep_probe", fail)
        assert cli.main(["reconstruct", "--config", str(write_config(tmp_path, SMALL_CAP))]) == 3
        assert "probe=0" in capsys.readouterr().out

    def test_insufficient_table(self, tmp_path):
        rows = [{**row, "branch": "cap"} for row in make_rows(taus=(4.0, 8.0), deltas=(1e-2, 1e-3))]
        path = write_results(results_frame(rows, experiment_id="demo", seed=1), tmp_path / "results.csv")
        assert cli.main(["table", "--in", str(path)]) == 4

    def test_selftest_detects_wrong_normalisation(self, monkeypatch):
        """Doubling the normalising constant breaks the full-boundary representation"""
        monkeypatch.setattr(carleman, "C3", 2.0 * carleman.C3)
        assert cli.main(["selftest", "--filter", "geometry"]) == 2


def test_table_writes_plot_ready_csv(tmp_path):
    path = write_results(frame_for(("cap", 0), ("cone", 0)), tmp_path / "results.csv")
    assert cli.main(["table", "--in", str(path)]) == 0
    table = pd.read_csv(tmp_path / "convergence.csv")
    assert list(table.columns) == CONVERGENCE_COLUMNS
    assert set(table["branch"]) == {"cap", "cone"}

    out = tmp_path / "plots" / "conv.csv"
    assert cli.main(["table", "--in", str(path), "--out", str(out)]) == 0
    assert out.read_bytes() == (tmp_path / "convergence.csv").read_bytes()


@pytest.mark.slow
def test_reconstruct_is_reproducible(tmp_path):
    """Two runs of one config give byte-identical outputs"""
    config = write_config(tmp_path, SMALL_CAP)
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli.main(["reconstruct", "--config", str(config), "--out", str(first)]) == 0
    assert cli.main(["reconstruct", "--config", str(config), "--out", str(second), "--threads", "1"]) == 0
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
    assert (first / "audit.json").read_bytes() == (second / "audit.json").read_bytes()

    results = pd.read_csv(first / "results.csv")
    assert list(results.columns) == RESULT_COLUMNS
    # 3 fixed taus x 4 deltas plus one automatic tau per positive delta, per probe
    assert len(results) == 2 * (3 * 4 + 3)
    assert (results["seed"] == 5).all()
    noisy = results[results["delta"] > 0]
    assert noisy["bound"].notna().all()

    audit = json.loads((first / "audit.json").read_text(encoding="utf-8"))
    assert audit["experiment_id"] == "cap-small"
    assert len(audit["probes"]) == 2

    assert cli.main(["table", "--in", str(first / "results.csv")]) == 0


@pytest.mark.slow
def test_seed_override_changes_results(tmp_path):
    config = write_config(tmp_path, dict(SMALL_CAP, probes=[[0.0, 0.0, 0.5]]))
    assert cli.main(["reconstruct", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["reconstruct", "--config", str(config), "--out", str(tmp_path / "b"), "--seed", "6"]) == 0
    a = pd.read_csv(tmp_path / "a" / "results.csv")
    b = pd.read_csv(tmp_path / "b" / "results.csv")
    assert (b["seed"] == 6).all()
    assert not a["error_abs"].equals(b["error_abs"])
