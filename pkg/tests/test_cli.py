import csv
import io

import pytest

from puskf.cli import EXIT_CONFIG, EXIT_FILTER, EXIT_OK, main


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_run_writes_csv(capsys):
    assert main(["run", "--scenario", "falling-body", "--filter", "ud-pu", "--seed", "2"]) == EXIT_OK
    out = rows(capsys.readouterr().out)
    assert out[0][0] == "time" and len(out) == 302


def test_run_to_file_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["run", "--filter", "pu", "--weights", "dc", "--out", str(path)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert b"\r\n" in a.read_bytes()


def test_monte_carlo(capsys, tmp_path):
    cfg = tmp_path / "fb.cfg"
    cfg.write_text("falling_body.duration = 5\n", encoding="utf-8")
    code = main(["monte-carlo", "--runs", "3", "--jobs", "2", "--config", str(cfg)])
    cap = capsys.readouterr()
    assert code == EXIT_OK
    assert rows(cap.out)[0][1] == "sampled_sigma_0"
    assert "runs=3" in cap.err


def test_compare(capsys):
    assert main(["compare", "--seed", "1"]) == EXIT_OK
    out = rows(capsys.readouterr().out)
    assert [r[0] for r in out[1:]] == ["sr-pu", "ud-pu"]
    assert all(float(r[1]) < 1e-6 for r in out[1:])


def test_flops(capsys):
    assert main(["flops", "--n", "3", "--m", "1-2"]) == EXIT_OK
    out = rows(capsys.readouterr().out)
    assert len(out) == 3
    rec = dict(zip(out[0], out[2]))
    assert (rec["batch"], rec["ud_update"]) == ("62", "18")


def test_export_config_roundtrip(tmp_path, capsys):
    path = tmp_path / "tumbler.cfg"
    assert main(["export-config", "--scenario", "tumbler", "--out", str(path)]) == EXIT_OK
    assert "tumbler.N = 12" in path.read_text(encoding="utf-8")
    assert main(["export-config", "--scenario", "tumbler", "--config", str(path)]) == EXIT_OK
    assert capsys.readouterr().out == path.read_text(encoding="utf-8")


def exit_code(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", "pendulum"],
    ["run", "--filter", "ukf"],
    ["run", "--weights", "0.5,2,1"],
    ["run", "--weights", "0.5,0.5"],
    ["run", "--config", "/nonexistent/x.cfg"],
    ["monte-carlo", "--runs", "0"],
    ["flops", "--n", "0-3"],
    ["run", "--scenario", "imu-cam", "--weights", "dnl"],
    [],
])
def test_config_errors_exit_2(argv, capsys):
    assert exit_code(argv) == EXIT_CONFIG


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("falling_body.nope = 1\n", encoding="utf-8")
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_filter_failure_exit_3(tmp_path, capsys):
    cfg = tmp_path / "neg.cfg"
    # a huge prior puts the estimate deep below ground, where the density term overflows
    cfg.write_text("falling_body.sigma0_position = 1e7\n", encoding="utf-8")
    assert main(["run", "--config", str(cfg), "--filter", "ekf", "--seed", "1"]) == EXIT_FILTER
    assert "filter failure" in capsys.readouterr().err
