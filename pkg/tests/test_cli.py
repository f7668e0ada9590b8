from pathlib import Path

import pytest

from resilient_platoon.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

ROBOT_ARGS = ["--d", "0.5", "--v-des", "1", "--u-min", "-1", "--u-max", "1", "--v-max", "1.4"]


def test_tune(capsys, tmp_path):
    region = tmp_path / "region.csv"
    assert main(["tune", *ROBOT_ARGS, "--check", "--region-csv", str(region),
                 "--d-grid", "0.1:1:5", "--h-grid", "0.05:0.5:4"]) == 0
    out = capsys.readouterr().out
    assert "k = 3.44828" in out and "h = 0.21" in out and "c = 4.82759" in out
    assert len(region.read_text().splitlines()) == 21


def test_tune_check_fails_on_unstable_h():
    args = ["--d", "6", "--v-des", "25", "--u-min", "-7.848", "--u-max", "4.905",
            "--v-max", "27.78", "--h", "0.112", "--check"]
    assert main(["tune", *args]) == 3


def test_tune_infeasible_is_config_error():
    args = ["--d", "0.01", "--v-des", "25", "--u-min", "-7.848", "--u-max", "4.905",
            "--v-max", "27.78"]
    assert main(["tune", *args]) == 1


def test_run_writes_outputs(tmp_path, capsys):
    trace, metrics = tmp_path / "t.csv", tmp_path / "m.csv"
    code = main(["run", str(SCENARIOS / "nominal.yaml"), "--trace", str(trace),
                 "--metrics", str(metrics), "--check"])
    assert code == 0
    assert trace.read_text().startswith("t,vehicle_id,")
    assert len(trace.read_text().splitlines()) == 1 + 3 * 400
    assert "collision" in capsys.readouterr().out


def test_run_bad_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("platoon: {d: 0.5, v_des: 1.0}\nlimits: {u_min: -1, u_max: 1, v_max: 1.4}\n"
                   "typo: 3\n")
    assert main(["run", str(bad)]) == 1
    assert main(["run", str(tmp_path / "missing.yaml")]) == 1


def test_run_collision_check(tmp_path):
    cfg = tmp_path / "weak.yaml"
    cfg.write_text(
        "platoon: {d: 6.0, v_des: 25.0, n: 2}\n"
        "limits: {u_min: -7.848, u_max: 4.905, v_max: 27.78}\n"
        "gains: {k: 0.5, h: 0.1, c: 0.5}\n"
        "mode: acc\nduration: 5.0\n"
        "leader: {emergency_brake_at: 1.0, brake_until_stop: true}\n")
    assert main(["run", str(cfg)]) == 0
    assert main(["run", str(cfg), "--check"]) == 3


def test_run_abort_is_runtime_error(tmp_path):
    text = (SCENARIOS / "detect_and_rearrange.yaml").read_text()
    text = text.replace("coordinator: {enabled: true, lane_change_time: 1.5}",
                        "coordinator: {enabled: true, lane_change_time: 1.5, horizon: 0.5}")
    cfg = tmp_path / "short.yaml"
    cfg.write_text(text)
    assert main(["run", str(cfg)]) == 2


def test_replay(tmp_path):
    trace = tmp_path / "t.csv"
    assert main(["run", str(SCENARIOS / "sinusoid_leader.yaml"), "--trace", str(trace)]) == 0
    assert main(["replay", str(trace), "--expect-quiet"]) == 0
    assert main(["replay", str(trace), "--expect-alarm"]) == 3
    out = tmp_path / "r.csv"
    assert main(["replay", str(trace), "--overlay", "sinusoid", "--a", "1", "--f", "0.05",
                 "--expect-alarm", "--out", str(out)]) == 0
    assert out.read_text().startswith("t,vehicle_id,r\n")
    bad = tmp_path / "bad.csv"
    bad.write_text("nothing,useful\n1,2\n")
    assert main(["replay", str(bad)]) == 1


def test_coord_example(capsys, tmp_path):
    out = tmp_path / "fixed.txt"
    assert main(["coord", str(SCENARIOS / "example1a.txt"), "--forbid", "2,3",
                 "--out", str(out)]) == 0
    assert "order 3 4 5 1 2" in capsys.readouterr().out
    assert out.read_text() == "1 5 2\n2 1 0\n3 0 4\n4 3 5\n5 4 1\n"


def test_coord_modes(tmp_path, capsys):
    chain = tmp_path / "chain.txt"
    chain.write_text("1 0 2\n2 1 3\n3 2 0\n")
    assert main(["coord", str(chain)]) == 0
    assert "topology is valid" in capsys.readouterr().out
    assert main(["coord", str(chain), "--merge", "4"]) == 0
    assert "order 1 2 3 4" in capsys.readouterr().out
    assert main(["coord", str(chain), "--split", "2"]) == 0
    assert "order 1 3" in capsys.readouterr().out
    assert main(["coord", str(chain), "--isolate", "1"]) == 0
    assert "order 2 3 1" in capsys.readouterr().out
    forged = tmp_path / "forged.txt"
    forged.write_text("1 0 2\n2 1 3\n3 5 4\n4 3 5\n5 4 0\n")
    assert main(["coord", str(forged), "--broadcast"]) == 0
    assert "suspect: 3" in capsys.readouterr().out


def test_coord_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 0\n")
    assert main(["coord", str(bad)]) == 1
    two = tmp_path / "two.txt"
    two.write_text("1 0 2\n2 1 0\n")
    assert main(["coord", str(two), "--forbid", "1,2", "--forbid", "2,1"]) == 3


def test_campaign_small(tmp_path, capsys):
    cfg = tmp_path / "base.yaml"
    cfg.write_text(
        "platoon: {d: 6.0, v_des: 25.0, n: 3}\n"
        "limits: {u_min: -7.848, u_max: 4.905, v_max: 27.78}\n"
        "duration: 5.0\n"
        "leader: {emergency_brake_at: 5.0, brake_until_stop: true}\n")
    agg, runs = tmp_path / "agg.csv", tmp_path / "runs.csv"
    assert main(["campaign", "--config", str(cfg), "--runs", "2", "--out", str(agg),
                 "--runs-csv", str(runs), "--check"]) == 0
    assert "collision_rate" in capsys.readouterr().out
    assert len(agg.read_text().splitlines()) == 4
    assert len(runs.read_text().splitlines()) == 7


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["fly"])
