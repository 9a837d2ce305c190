import csv
import json
import os
import subprocess
import sys

import pytest

from parsel import cli
from parsel.errors import NumericalFailure

SMALL = "flowline:R=4,B=3,warmup_jobs=50,observe_jobs=20"


def write(path, text):
    path.write_text(text)
    return str(path)


def test_run_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--model", "flowline:3,2", "--delta", "0.1", "--n0", "0", "--n1", "10",
                     "--out", str(out), "--trace", str(tmp_path / "t.ndjson")])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["selected_system"] == 0 and report["model"]["systems"] == 1
    assert (out / "report.csv").read_text().count("\n") == 2
    events = [json.loads(line) for line in (tmp_path / "t.ndjson").read_text().splitlines()]
    assert events and all("event" in e for e in events)
    assert "selected system" in capsys.readouterr().out


def test_missing_delta_names_key(tmp_path, capsys):
    assert cli.main(["run", "--model", "flowline:3,2", "--out", str(tmp_path)]) == 2
    assert "delta" in capsys.readouterr().err
    assert not (tmp_path / "report.json").exists()


def test_bad_values_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--model", "flowline:3,2", "--delta", "0.1", "--alpha1", "1.5",
                     "--out", str(tmp_path)]) == 2
    assert "alpha1" in capsys.readouterr().err
    cfg = write(tmp_path / "c.cfg", "delta = 0.1\nbogus = 3\n")
    assert cli.main(["run", "--model", "flowline:3,2", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["run", "--model", "nothing:1", "--delta", "0.1", "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(monkeypatch, tmp_path, capsys):
    def boom(*a, **k):
        raise NumericalFailure("solver diverged", residual=1.0)

    monkeypatch.setattr(cli, "oracle_table", boom)
    assert cli.main(["oracle", "3", "2"]) == 3
    assert "residual" in capsys.readouterr().err


def test_oracle_single_system(tmp_path):
    path = tmp_path / "o.csv"
    assert cli.main(["oracle", "3", "2", "--out", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "schema_version,system_id,r1,r2,r3,b2,b3,exact_mean"
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))[1:]
    assert len(rows) == 1 and rows[0][2:7] == ["1", "1", "1", "1", "1"]
    assert float(rows[0][7]) == pytest.approx(0.5641025641025641, abs=1e-12)
    assert "# within_0.01=1" in lines


def test_oracle_infeasible_is_header_only(capsys):
    assert cli.main(["oracle", "2", "2"]) == 0
    assert capsys.readouterr().out.strip() == "schema_version,system_id,r1,r2,r3,b2,b3,exact_mean"


def test_pgs_rejects_zero_macro_reps(tmp_path):
    assert cli.main(["pgs", "--model", SMALL, "--delta", "1", "--macro-reps", "0", "--out", str(tmp_path)]) == 2


def test_pgs_is_one_when_delta_exceeds_spread(tmp_path):
    code = cli.main(["pgs", "--model", SMALL, "--delta", "5", "--n0", "0", "--n1", "10",
                     "--macro-reps", "3", "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "pgs.json").read_text())
    assert summary["pgs"] == 1.0 and summary["good_selections"] == 3
    assert summary["ci99"][0] < 1.0 == summary["ci99"][1]
    assert (tmp_path / "runs.csv").read_text().count("\n") == 4


def test_macro_seeds_distinct_and_stable():
    seeds = [cli.macro_seed(7, r) for r in range(100)]
    assert len(set(seeds)) == 100 and seeds == [cli.macro_seed(7, r) for r in range(100)]


def test_compare_identical_specs(tmp_path):
    a = write(tmp_path / "a.cfg", f"model = {SMALL}\ndelta = 0.5\nn0 = 0\nn1 = 10\n")
    assert cli.main(["compare", a, a, "--out", str(tmp_path / "cmp")]) == 0
    rows = list(csv.DictReader((tmp_path / "cmp" / "compare.csv").open()))
    assert [r["metric"] for r in rows] == ["replications", "wall_clock", "utilization"]
    assert all(float(r["ratio_a_over_b"]) == 1.0 for r in rows)


def test_compare_mismatched_models(tmp_path, capsys):
    a = write(tmp_path / "a.cfg", f"model = {SMALL}\ndelta = 0.5\n")
    b = write(tmp_path / "b.cfg", "model = flowline:3,2\ndelta = 0.5\n")
    assert cli.main(["compare", a, b, "--out", str(tmp_path / "cmp")]) == 2
    assert "model" in capsys.readouterr().err
    assert not (tmp_path / "cmp").exists()


def test_thread_cap(monkeypatch, tmp_path):
    monkeypatch.setenv("PARSEL_THREADS", "2")
    args = cli.build_parser().parse_args(["run", "--model", SMALL, "--delta", "1", "--workers", "8"])
    assert cli.resolve_spec(args)["config"].workers == 2
    monkeypatch.setenv("PARSEL_THREADS", "zero")
    assert cli.main(["run", "--model", SMALL, "--delta", "1", "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path):
    c = write(tmp_path / "c.cfg", "delta = 0.5\nn1 = 30\nexecutor = rounds\n")
    args = cli.build_parser().parse_args(["run", "--config", c, "--n1", "12"])
    spec = cli.resolve_spec(args)
    assert spec["config"].n1 == 12 and spec["config"].delta == 0.5 and spec["executor"] == "rounds"


def test_existing_report_untouched_on_failure(tmp_path):
    (tmp_path / "report.json").write_text("old")
    assert cli.main(["run", "--model", SMALL, "--out", str(tmp_path)]) == 2
    assert (tmp_path / "report.json").read_text() == "old"
    assert [p for p in os.listdir(tmp_path)] == ["report.json"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "parsel", "oracle", "3", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("schema_version")
