import json
import subprocess
import sys
from pathlib import Path

import pytest

from forcedwave.cli import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

PSET_A_TOML = """
scenario = "{scenario}"
speed = {speed}

[model]
d = 1.0
r1 = {r1}
r2 = 2.0
r3 = 1.0
a = 2.0
b = 0.1
h = 0.5
k = 1.5

[grid]
n = 2001
"""


def _write(tmp_path, name="run.toml", scenario="Eu", speed="2.5", r1=1.0, extra=""):
    path = tmp_path / name
    path.write_text(PSET_A_TOML.format(scenario=scenario, speed=speed, r1=r1) + extra)
    return path


def _report(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestExitCodes:
    def test_check_passes(self, tmp_path, capsys):
        assert run(["check", "--config", str(_write(tmp_path))]) == 0
        assert _report(capsys)["hypotheses"]["passed"] is True

    def test_check_hypothesis_failure(self, tmp_path, capsys):
        assert run(["check", "--config", str(_write(tmp_path, r1=2.0))]) == 3
        rep = _report(capsys)["hypotheses"]
        assert rep["first_failure"] == "prey_growth_margin"

    def test_verify_passes(self, capsys):
        assert run(["verify", "--config", str(CONFIGS / "pset_a.toml")]) == 0
        assert _report(capsys)["verification"]["passed"] is True

    def test_verify_failure_names_condition(self, capsys):
        assert run(["verify", "--config", str(CONFIGS / "q1_sharpness.toml")]) == 2
        ver = _report(capsys)["verification"]
        assert ver["first_failure"]["check"] == "L2"
        assert ver["first_failure"]["detail"]["at"] < 0

    def test_critical_speed_keyword(self, capsys):
        assert run(["verify", "--config", str(CONFIGS / "pset_a_critical.toml")]) == 0
        assert _report(capsys)["speed"] == pytest.approx(2.0)

    def test_hypothesis_error_from_builder(self, tmp_path, capsys):
        assert run(["bounds", "--config", str(_write(tmp_path, r1=2.0))]) == 3
        assert _report(capsys)["condition"] == "prey_growth_margin"

    def test_chain_needs_predation_threshold(self, tmp_path, capsys):
        cfg = CONFIGS / "pset_c.toml"
        text = cfg.read_text().replace("b = 0.02", "b = 0.05")
        path = tmp_path / "c.toml"
        path.write_text(text)
        assert run(["chain", "--config", str(path)]) == 3
        assert _report(capsys)["condition"] == "predation_threshold"

    def test_solver_failure(self, tmp_path, capsys):
        path = _write(tmp_path, extra="\n[solver]\nmax_iter = 1\n")
        assert run(["solve", "--config", str(path)]) == 4
        assert _report(capsys)["error"] == "MaxIterations"

    @pytest.mark.parametrize("argv", [
        ["nonsense"],
        [],
        ["check", "--jobs", "x"],
    ])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            code = run(argv)
            raise SystemExit(code)
        assert exc.value.code == 1

    def test_unknown_config_key(self, tmp_path):
        path = _write(tmp_path, extra="\n[grid]\nfoo = 3\n".replace("[grid]", "[solver]"))
        assert run(["check", "--config", str(path)]) == 1

    def test_missing_config(self, tmp_path):
        assert run(["check", "--config", str(tmp_path / "none.toml")]) == 1


class TestOutputs:
    def test_print_schema(self, capsys):
        assert run(["--print-schema"]) == 0
        sch = _report(capsys)
        assert "model" in sch["properties"] and sch["additionalProperties"] is False

    def test_report_embeds_config(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["speeds", "--config", str(_write(tmp_path)), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["config"]["model"]["r2"] == 2.0
        assert rep["critical_speeds"]["s2_star"] == pytest.approx(2.0)

    def test_bounds_export(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["bounds", "--config", str(_write(tmp_path)), "--out", str(out)]) == 0
        files = _report(capsys)["files"]
        assert len(files) == 6
        assert Path(files[0]).read_text().splitlines()[0] == "z,value,first,second"

    def test_solve_is_byte_identical(self, tmp_path, capsys):
        cfg = _write(tmp_path)
        for name in ("one", "two"):
            assert run(["solve", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        a = (tmp_path / "one" / "wave.csv").read_bytes()
        b = (tmp_path / "two" / "wave.csv").read_bytes()
        assert a == b and a.startswith(b"z,phi1,phi2,phi3")

    @pytest.mark.parametrize("jobs", ["1", "2"])
    def test_sweep(self, tmp_path, capsys, jobs):
        cfg = _write(tmp_path, extra="\n[sweep]\nspeeds = [1.5, 2.5, 3.0]\n")
        out = tmp_path / "out"
        code = run(["check", "--config", str(cfg), "--out", str(out), "--jobs", jobs])
        summary = _report(capsys)["sweep"]
        assert [e["exit_code"] for e in summary] == [3, 0, 0]
        assert code == 3
        assert (out / "s_2.5" / "report.json").exists()

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "forcedwave", "check", "--config", str(_write(tmp_path))],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["command"] == "check"
