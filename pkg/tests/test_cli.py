import csv
import os
import subprocess
import sys

from conftest import BUFFER_EQ, NODE, REFILL
from shype.cli import DEFAULT_SEED, main


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate_ok(capsys):
    assert main(["validate", NODE]) == 0
    assert "ok" in capsys.readouterr().out


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.hype")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_syntax_error_is_model_error(tmp_path, capsys):
    bad = tmp_path / "bad.hype"
    bad.write_text(open(NODE).read().replace("sys <*> con;", "sys <*> conx;"))
    assert main(["validate", str(bad)]) == 1
    assert "undefined name conx" in capsys.readouterr().err


def test_unknown_param_is_model_error(tmp_path):
    assert main(["simulate", BUFFER_EQ, "--param", "nope=1", "--out", str(tmp_path)]) == 1


def test_zeno_is_runtime_error(tmp_path):
    text = open(BUFFER_EQ).read().replace("event full = B == maxB :-> ;", "event full = B >= 0 :-> ;") \
        .replace("Con_in_on := off_in.Con_in + full.Con_in;", "Con_in := full.Con_in + on_in.Con_in_on;\nCon_in_on := off_in.Con_in + full.Con_in;") \
        .replace("Con_in := on_in.Con_in_on;\n", "", 1)
    path = tmp_path / "zeno.hype"
    path.write_text(text)
    assert main(["validate", str(path)]) == 0
    assert main(["simulate", str(path), "--out", str(tmp_path), "--t-end", "1"]) == 3


def test_simulate_writes_csvs(tmp_path, capsys):
    assert main(["simulate", BUFFER_EQ, "--t-end", "50", "--seed", "3", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "trajectory.csv")
    assert rows[0] == ["time", "B", "I_Input", "I_Output", "C_Con_in", "C_Con_out"]
    assert float(rows[-1][0]) == 50.0
    ev = read_rows(tmp_path / "events.csv")
    assert ev[0] == ["time", "event", "kind"]
    assert f"events fired: {len(ev) - 2}" in capsys.readouterr().out  # minus header and init


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", NODE, "--t-end", "400", "--seed", "7", "--out", str(out)]) == 0
    for name in ("trajectory.csv", "events.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SHYPE_SEED", "7")
    assert main(["simulate", NODE, "--t-end", "400", "--out", str(tmp_path / "env")]) == 0
    monkeypatch.delenv("SHYPE_SEED")
    assert main(["simulate", NODE, "--t-end", "400", "--seed", "7",
                 "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "events.csv").read_bytes() == \
        (tmp_path / "flag" / "events.csv").read_bytes()
    assert DEFAULT_SEED == 1729


def test_deterministic_model_ignores_seed(tmp_path):
    path = tmp_path / "refill.hype"
    path.write_text(REFILL)
    for seed in ("1", "2"):
        assert main(["simulate", str(path), "--seed", seed, "--t-end", "10",
                     "--out", str(tmp_path / seed)]) == 0
    assert (tmp_path / "1" / "trajectory.csv").read_bytes() == \
        (tmp_path / "2" / "trajectory.csv").read_bytes()


def test_t_end_zero(tmp_path):
    assert main(["simulate", BUFFER_EQ, "--t-end", "0", "--out", str(tmp_path)]) == 0
    assert len(read_rows(tmp_path / "trajectory.csv")) == 2


def test_batch_summary(tmp_path):
    assert main(["batch", BUFFER_EQ, "--runs", "8", "--t-end", "100", "--observable", "B",
                 "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "summary.csv")
    assert rows[0] == ["observable", "n", "mean", "sd", "ci_lo", "ci_hi"]
    assert rows[1][:2] == ["B", "8"]


def test_batch_unknown_observable(tmp_path):
    assert main(["batch", BUFFER_EQ, "--observable", "X=Q", "--out", str(tmp_path)]) == 1


def test_sweep_writes_tables(tmp_path):
    assert main(["sweep", BUFFER_EQ, "--parameter", "kon_in", "--values", "0.1,0.5", "--runs", "4",
                 "--t-end", "50", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "B.csv")
    assert [r[1] for r in rows[1:]] == ["0.1", "0.5"]
    assert os.path.exists(tmp_path / "raw.csv")


def test_render_scenario(tmp_path, capsys):
    scen = tmp_path / "s.txt"
    scen.write_text("scenario = rtbf\nsensors = 2\n")
    assert main(["render", "--scenario", str(scen)]) == 0
    assert "Level_s2" in capsys.readouterr().out


def test_casestudy_small(tmp_path, capsys):
    scen = tmp_path / "s.txt"
    scen.write_text("sensors = 3\nmtc_values = 10, 30\nbuffer_values = 200\n")
    assert main(["casestudy", str(scen), "--runs", "3", "--scenarios", "raer,rtbf",
                 "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out"
    for exp in ("mtc", "buffer"):
        for obs in ("total_dropped", "total_collected", "total_delivered", "total_generated"):
            assert (out / f"{exp}_{obs}.csv").exists()
        assert (out / f"{exp}_total_dropped.gp").exists()
    rows = read_rows(out / "mtc_total_dropped.csv")
    assert [r[0] for r in rows[1:]] == ["raer", "raer", "rtbf", "rtbf"]
    assert "s/run" in capsys.readouterr().out


def test_casestudy_bad_experiment(tmp_path):
    scen = tmp_path / "s.txt"
    scen.write_text("sensors = 2\n")
    assert main(["casestudy", str(scen), "--experiments", "speed", "--out", str(tmp_path)]) == 1


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shype.cli", "validate", BUFFER_EQ],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
