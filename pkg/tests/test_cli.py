import csv
import json
import shutil
import subprocess
import sys

import pytest

from psrolab.cli import main
from psrolab.plotting import read_series

SMALL = ["--override", "iterations=1", "--override", "episodes=100",
         "--override", "dqn.hidden=(8,)", "--override", "dqn.batch_size=16"]


@pytest.fixture(scope="module")
def kuhn_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "kuhn"
    code = main(["run", "--preset", "kuhn-desk", "--variant", "psro", "--out", str(out),
                 "--quiet"] + SMALL)
    assert code == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_artifacts(kuhn_run):
    for name in ("metrics.csv", "timing.csv", "config.ini", "exploitability.svg"):
        assert (kuhn_run / name).exists()
    assert (kuhn_run / "checkpoint" / "meta.json").exists()
    rows = read_csv(kuhn_run / "metrics.csv")
    assert len(rows) == 1 and float(rows[0]["exploitability"]) >= 0


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("PSROLAB_OUT", str(tmp_path))
    assert main(["run", "--preset", "kuhn-desk", "--variant", "psro", "--seed", "3",
                 "--quiet"] + SMALL) == 0
    assert (tmp_path / "kuhn-desk-psro-s3" / "metrics.csv").exists()


def test_eval_exact_appends_report(kuhn_run, capsys):
    assert main(["eval", str(kuhn_run), "--mode", "exact"]) == 0
    assert main(["eval", str(kuhn_run), "--mode", "exact"]) == 0
    rows = read_csv(kuhn_run / "report.csv")
    assert len(rows) == 2 and rows[0] == rows[1]
    assert rows[0]["method"] == "exact" and float(rows[0]["exploitability"]) >= 0
    assert "exploitability" in capsys.readouterr().out


def test_eval_h2h_layout(kuhn_run):
    assert main(["eval", str(kuhn_run), "--mode", "h2h", "--episodes", "100",
                 "--h2h-episodes", "50"]) == 0
    rows = read_csv(kuhn_run / "h2h.csv")
    assert [(r["player"], r["method"]) for r in rows] == [
        (p, m) for p in ("0", "1") for m in ("standard", "routing", "distill")]
    assert (kuhn_run / "h2h.svg").exists()


def test_eval_rejects_other_checkpoint_version(kuhn_run, tmp_path, capsys):
    copy = tmp_path / "old"
    shutil.copytree(kuhn_run, copy)
    meta_path = copy / "checkpoint" / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["format_version"] = 99
    meta_path.write_text(json.dumps(meta))
    assert main(["eval", str(copy)]) == 1
    assert "version" in capsys.readouterr().err


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", str(tmp_path)]) == 1


def test_approx_on_imperfect_recall(tmp_path, capsys):
    out = tmp_path / "ir"
    assert main(["run", "--preset", "liars-dice-ir-default", "--variant", "psro", "--out",
                 str(out), "--quiet", "--override", "approx_episodes=20",
                 "--override", "eval_episodes=20", "--override", "episodes_per_entry=5",
                 "--override", "dqn.buffer_size=100"] + SMALL) == 0
    capsys.readouterr()
    assert main(["eval", str(out), "--mode", "approx", "--episodes", "20"]) == 0
    row = capsys.readouterr().out.splitlines()[1].split(",")
    assert row[1] == "approximate" and float(row[2]) == float(row[2])
    assert main(["eval", str(out), "--mode", "exact"]) == 1


def test_plot_is_deterministic_and_ordered(tmp_path):
    paths = []
    for name, vals in (("psro", [0.9, 0.5]), ("psd", [0.8, 0.4]), ("conflux", [0.7, 0.2])):
        p = tmp_path / f"{name}.csv"
        p.write_text("iteration,exploitability\n" +
                     "".join(f"{i + 1},{v}\n" for i, v in enumerate(vals)))
        paths.append(str(p))
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(["plot", *paths, "--out", str(a)]) == 0
    assert main(["plot", *paths, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    svg = a.read_text()
    # legend labels are emitted as comments ahead of their glyph paths
    marks = [svg.index(f"<!-- {name} -->") for name in ("psro", "psd", "conflux")]
    assert marks == sorted(marks)


def test_plot_single_series_point_count(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("iteration,exploitability\n1,0.5\n2,0.25\n3,0.125\n")
    xs, ys = read_series(p)
    assert xs == [1, 2, 3] and ys == [0.5, 0.25, 0.125]
    assert main(["plot", str(p), "--out", str(tmp_path / "one.svg")]) == 0


def test_plot_empty_body_and_bad_schema(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("iteration,exploitability\n")
    out = tmp_path / "x.svg"
    assert main(["plot", str(empty), "--out", str(out)]) == 1
    assert not out.exists()
    bad = tmp_path / "bad.csv"
    bad.write_text("step,value\n1,2\n")
    assert main(["plot", str(bad), "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert "no data rows" in err and "missing column 'iteration'" in err


def test_usage_errors():
    assert main([]) == 1
    assert main(["run", "--preset", "nope"]) == 1
    assert main(["run", "--preset", "kuhn-desk", "--override", "bogus=1"]) == 1


def test_selftest_passes_and_fault_is_named(capsys):
    assert main(["selftest"]) == 0
    first = capsys.readouterr().out
    assert main(["selftest", "--inject-fault", "payoff"]) == 2
    out = capsys.readouterr().out
    assert "FAIL zero_sum" in out
    assert main(["selftest"]) == 0
    again = capsys.readouterr().out
    strip = [line.split(":")[0] for line in first.splitlines()]
    assert strip == [line.split(":")[0] for line in again.splitlines()]


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "psrolab.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "selftest" in res.stdout
