import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from carleman_toolkit.exceptions import AuditError, ConfigError
from carleman_toolkit.reconstruct import ErrorReport
from carleman_toolkit.report import (CONVERGENCE_COLUMNS, RESULT_COLUMNS, SUMMARY_COLUMNS, audit_payload,
                                     convergence_table, load_results, results_frame, write_audit, write_results)

GOLDEN_HEADER = ("experiment_id,branch,probe,x1,x2,x3,tau,tau_auto,delta,M,error_abs,error_rel,bound,constant,"
                 "floor,min_distance,nodes,seed")


def make_rows(branch="cap", probe=0, x3=0.5, taus=(4.0, 8.0, 16.0), deltas=(1e-2, 1e-3, 1e-4)):
    rows = []
    for tau in taus:
        rows.append({"probe": probe, "x1": 0.0, "x2": 0.0, "x3": x3, "tau": tau, "tau_auto": False,
                     "delta": 0.0, "M": 2.0, "error_abs": np.exp(-x3 * tau), "error_rel": np.exp(-x3 * tau) / 3,
                     "bound": None, "floor": 1e-9, "min_distance": x3, "nodes": 512})
    for delta in deltas:
        rows.append({"probe": probe, "x1": 0.0, "x2": 0.0, "x3": x3, "tau": np.log(2.0 / delta), "tau_auto": True,
                     "delta": delta, "M": 2.0, "error_abs": delta ** x3, "error_rel": delta ** x3 / 3,
                     "bound": 2 * delta ** x3, "floor": 1e-9, "min_distance": x3, "nodes": 512})
    return rows


def frame_for(*groups):
    rows = []
    for branch, probe in groups:
        rows.extend({**row, "branch": branch} for row in make_rows(branch, probe))
    return results_frame(rows, experiment_id="demo", seed=7)


class TestResultsFile(unittest.TestCase):

    def test_column_order_is_fixed(self):
        """results.csv starts with the documented header"""
        self.assertEqual(",".join(RESULT_COLUMNS), GOLDEN_HEADER)

    def test_constant_column(self):
        """The fitted constant is error over bound, empty without a bound"""
        frame = frame_for(("cap", 0))
        self.assertTrue(frame["constant"].iloc[:3].isna().all())
        np.testing.assert_allclose(frame["constant"].iloc[3:], 0.5)

    def test_written_file(self):
        """Header, '.' decimals and a reproducible byte stream"""
        frame = frame_for(("cap", 0))
        with tempfile.TemporaryDirectory() as tmp:
            first = write_results(frame, Path(tmp) / "a" / "results.csv").read_bytes()
            second = write_results(frame, Path(tmp) / "b" / "results.csv").read_bytes()
        self.assertEqual(first, second)
        lines = first.decode("utf-8").splitlines()
        self.assertEqual(lines[0], GOLDEN_HEADER)
        self.assertEqual(len(lines), 1 + 6)

    def test_missing_columns(self):
        """Rows without the required fields are rejected"""
        with self.assertRaises(ValueError):
            results_frame([{"probe": 0}])


def test_load_results_checks_columns(tmp_path):
    """A CSV without the result columns is not a results file"""
    path = tmp_path / "other.csv"
    pd.DataFrame({"a": [1]}).to_csv(path, index=False)
    with pytest.raises(ConfigError):
        load_results(path)
    with pytest.raises(ConfigError):
        load_results(tmp_path / "missing.csv")


def test_audit_json_is_canonical(tmp_path):
    """Sorted keys, rounded floats and null for missing fits"""
    report = ErrorReport("cap", (0.0, 0.0, 0.5), tau_slope=-0.5000000000000004, flags={"tau_slope": True})
    payload = audit_payload("demo", "cap", 7, 1.2345678901234567, [report])
    path = write_audit(payload, tmp_path / "audit.json")
    text = path.read_text(encoding="utf-8")
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert data["M"] == 1.23456789012
    assert data["probes"][0]["tau_slope"] == -0.5
    assert data["probes"][0]["delta_exponent"] is None
    assert data["passed"] is True
    assert text.endswith("\n")


class TestConvergenceTable(unittest.TestCase):

    def test_slopes_per_probe(self):
        """One tau slope and one delta exponent per probe"""
        long_frame, summary = convergence_table(frame_for(("cap", 0), ("cap", 1)))
        self.assertEqual(list(long_frame.columns), CONVERGENCE_COLUMNS)
        self.assertEqual(list(summary.columns), SUMMARY_COLUMNS)
        self.assertEqual(len(summary), 2)
        np.testing.assert_allclose(summary["tau_slope"], -0.5 / np.log(10.0))
        np.testing.assert_allclose(summary["delta_exponent"], 0.5)

    def test_grouped_by_branch(self):
        """Mixed branches come out grouped"""
        _, summary = convergence_table(frame_for(("cone", 0), ("cap", 0)))
        self.assertEqual(list(summary["branch"]), ["cap", "cone"])

    def test_long_format(self):
        """Each sweep point becomes one plot-ready row"""
        long_frame, _ = convergence_table(frame_for(("cap", 0)))
        self.assertEqual(sorted(long_frame["axis"].unique()), ["delta", "tau"])
        self.assertEqual(len(long_frame), 6)

    def test_too_few_points(self):
        """Fewer than three points on both axes is an audit error"""
        rows = make_rows(taus=(4.0, 8.0), deltas=(1e-2,))
        frame = results_frame([{**row, "branch": "cap"} for row in rows], experiment_id="demo", seed=1)
        with self.assertRaises(AuditError):
            convergence_table(frame)

    def test_round_trip_through_csv(self):
        """The table reads the CSV written by the sweep"""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_results(frame_for(("cap", 0)), Path(tmp) / "results.csv")
            _, summary = convergence_table(load_results(path))
        self.assertAlmostEqual(summary["delta_exponent"].iloc[0], 0.5, places=8)
