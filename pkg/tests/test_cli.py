import json
import shutil
import subprocess
import sys

import pytest

from etf2d.cli import main


def test_simulate_exit_zero(tmp_path, capsys):
    assert main(["simulate", "--config", "linear_small", "--trials", "100",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS bound_dominance" in out
    assert (tmp_path / "summary.json").exists()


@pytest.mark.parametrize("command", ["verify", "monotonicity", "reconstruct-check"])
def test_other_commands_exit_zero(command, tmp_path):
    assert main([command, "--config", "linear_small", "--trials", "100", "-q",
                 "--out", str(tmp_path)]) == 0


def test_configuration_errors_exit_two(tmp_path, capsys):
    assert main(["simulate", "--config", "linear_small", "--trials", "0",
                 "--out", str(tmp_path)]) == 2
    assert "trials" in capsys.readouterr().err
    assert main(["verify", "--config", "linear_small", "--override", "etm.rho=[[1.5], [2.5]]",
                 "--out", str(tmp_path)]) == 2
    assert "etm.rho[0][0]" in capsys.readouterr().err
    assert main(["verify", "--config", "missing.yaml", "--out", str(tmp_path)]) == 2


def test_failing_check_exits_one(tmp_path):
    # A trigger-rate ceiling of zero cannot be met.
    assert main(["simulate", "--config", "linear_small", "--trials", "20", "-q",
                 "--override", "checks.trigger_rate_max=0.0", "--out", str(tmp_path)]) == 1
    d = json.loads((tmp_path / "summary.json").read_text())
    assert d["passed"] is False


def test_relaxed_override_skips_with_warning(tmp_path, capsys):
    code = main(["verify", "--config", "linear_small", "--trials", "50", "--out", str(tmp_path),
                 "--override", "etm.rho=[[1.5], [2.5]]", "--override", "etm.strict=false"])
    out = capsys.readouterr().out
    assert code == 0
    assert "SKIP xi_nonnegative" in out and "WARN" in out


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["fly", "--config", "linear_small"])
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("etf2d") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["etf2d", "reconstruct-check", "--config", "linear_small",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS zero_noise_residual" in proc.stdout


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "etf2d.cli", "verify", "--config",
                           "linear_small", "--trials", "20", "-q", "--out", str(tmp_path)])
    assert proc.returncode == 0
