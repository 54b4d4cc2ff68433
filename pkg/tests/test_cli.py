import pytest

from rangerevoke import cli


def test_parse_duration():
    assert cli.parse_duration("90") == 90
    assert cli.parse_duration("1.5h") == 5400
    assert cli.parse_duration("1d") == 86_400
    assert cli.parse_duration("1y") == 31_536_000
    with pytest.raises(ValueError):
        cli.parse_duration("10q")


def test_size_command(capsys, tmp_path):
    assert cli.main(["--out", str(tmp_path), "size"]) == 0
    out = capsys.readouterr().out
    assert "4910.9" in out
    assert "~9 KB" in out
    header, row = (tmp_path / "size.csv").read_text().splitlines()
    assert header.startswith("slots,")
    assert row.startswith("144,")


def test_size_command_minute_slots(capsys):
    assert cli.main(["size", "--slots", "1440", "--delta", "60"]) == 0
    assert "~13 KB" in capsys.readouterr().out


def test_size_command_degenerate_single_slot(capsys):
    assert cli.main(["size", "--slots", "1"]) == 0
    assert "slots T              1" in capsys.readouterr().out


def test_size_command_bad_params():
    assert cli.main(["size", "--revoked-frac", "2.0"]) == 2


def test_storage_compare_command(capsys, tmp_path):
    assert cli.main(["--out", str(tmp_path), "storage-compare"]) == 0
    out = capsys.readouterr().out
    assert "39.2" in out                      # the year-at-1s headline ratio
    lines = (tmp_path / "storage.csv").read_text().splitlines()
    assert lines[0].startswith("delta_s,")
    assert len(lines) > 5


def test_simulate_bundled_scenario(capsys, tmp_path):
    assert cli.main(["--out", str(tmp_path), "simulate", "safemode"]) == 0
    out = capsys.readouterr().out
    assert "[ok] safemode" in out
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "auths.csv").read_text().startswith("at,verifier")


def test_simulate_seed_override_keeps_checks(capsys):
    assert cli.main(["simulate", "safemode", "--seed", "99"]) == 0


def test_simulate_missing_scenario(capsys):
    assert cli.main(["simulate", "no-such-scenario"]) == 2
    assert "bad scenario" in capsys.readouterr().err


def test_simulate_malformed_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("[script]\na1 = oops\n")
    assert cli.main(["simulate", str(bad)]) == 2


def test_scenario_failing_check_exits_one(tmp_path, capsys):
    scn = tmp_path / "fail.scn"
    scn.write_text(
        "[sim]\nseed = 1\nmanagers = 1\nfault_bound = 0\nclients = 1\n"
        "horizon = 10\n"
        "[checks]\nrecovers = v0:1\n")
    assert cli.main(["simulate", str(scn)]) == 1
    assert "[FAIL] recovers" in capsys.readouterr().out


def test_unknown_check_is_config_error(tmp_path, capsys):
    scn = tmp_path / "odd.scn"
    scn.write_text("[sim]\nseed = 1\nhorizon = 5\n[checks]\nbogus = yes\n")
    assert cli.main(["simulate", str(scn)]) == 2


def test_bench_command(capsys, tmp_path):
    assert cli.main(["--out", str(tmp_path), "bench",
                     "--reps", "3", "--threads", "1"]) == 0
    out = capsys.readouterr().out
    assert "verification latency vs tree height" in out
    assert (tmp_path / "bench_latency.csv").exists()
    assert (tmp_path / "bench_throughput.csv").exists()


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2
