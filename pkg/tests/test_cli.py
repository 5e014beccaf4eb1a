import hashlib
import json
import subprocess
import sys

import pytest

from clihelpers import artifact_bytes, command_of, run
from nlpemem import cli, config


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


SMALL = {
    "echo-decay": {"command": "echo-decay", "seed": 1, "sweep": {"axis": "t31", "values": [1e-5, 3e-5, 5e-5]},
                   "simulation": {"n_ions": 70000, "trace_points": 11}},
    "dd-bench": {"command": "dd-bench", "seed": 2, "n_ions": 70000, "angle_errors_over_pi": [0.0, 0.062]},
    "snr": {"command": "snr", "seed": 3, "channel": {"eta_m": 0.12, "p_n": 0.0098}, "mu": 1.07,
            "repetitions": 300000},
}


@pytest.mark.parametrize("cmd", list(SMALL))
def test_worker_count_does_not_change_artifacts(tmp_path, cmd, capsys):
    cfg = write(tmp_path, "c.json", SMALL[cmd])
    outs = []
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        assert run(cmd, cfg, out, "--workers", str(w)) == 0
        outs.append(artifact_bytes(out))
    assert outs[0] == outs[1] == outs[2]
    assert len(outs[0]) >= 2


def test_run_record_digests(tmp_path, configs_dir, capsys):
    out = tmp_path / "r"
    assert run("fidelity", configs_dir / "fidelity_rows.json", out) == 0
    rec = json.loads((out / "run_record.json").read_text())
    assert rec["command"] == "fidelity" and rec["config"]["seed"] == 7
    for name, digest in rec["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert "timestamp" in rec


def test_fidelity_table_values(tmp_path, configs_dir, capsys):
    out = tmp_path / "f"
    run("fidelity", configs_dir / "fidelity_rows.json", out)
    reports = json.loads((out / "reports.json").read_text())
    totals = [r["f_total"] for r in reports]
    assert totals == pytest.approx([0.861, 0.897, 0.977], abs=1e-3)
    assert all(r["verdict"] == "quantum" for r in reports)


def test_seed_override_changes_output(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", SMALL["snr"])
    run("snr", cfg, tmp_path / "a")
    run("snr", cfg, tmp_path / "b", "--seed", "99")
    assert artifact_bytes(tmp_path / "a")["histogram.csv"] != artifact_bytes(tmp_path / "b")["histogram.csv"]


def test_existing_run_needs_force(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", SMALL["snr"])
    out = tmp_path / "o"
    assert run("snr", cfg, out) == 0
    capsys.readouterr()
    assert run("snr", cfg, out) == 2
    err = json.loads(capsys.readouterr().err)
    assert "--force" in err["message"]
    assert run("snr", cfg, out, "--force") == 0
    assert not (out / ".nlpemem.lock").exists()


def test_locked_directory_refused(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", SMALL["snr"])
    out = tmp_path / "o"
    out.mkdir()
    (out / ".nlpemem.lock").write_text("1")
    assert run("snr", cfg, out) == 2


def test_env_output_root(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, "c.json", SMALL["snr"])
    monkeypatch.setenv("NLPEMEM_OUT", str(tmp_path / "root"))
    assert cli.main(["snr", "--config", str(cfg)]) == 0
    assert (tmp_path / "root" / "snr" / "run_record.json").is_file()


def test_schema_errors_point_at_field(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"command": "echo-decay", "timing": {"t42": -1.0}})
    assert run("echo-decay", cfg, tmp_path / "o") == 2
    err = json.loads(capsys.readouterr().err)
    assert any(e["path"] == "/timing/t42" for e in err["errors"])
    cfg = write(tmp_path, "d.json", {"command": "snr", "mu": 1.0, "bogus": 1})
    assert run("snr", cfg, tmp_path / "o2") == 2


def test_cross_field_check(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"command": "echo-decay",
                                     "sweep": {"axis": "spin_storage", "values": [1e-4]},
                                     "dd": {"sequence": "XY4", "pulse_duration": 6e-5}})
    assert cli.main(["validate", "--config", str(cfg)]) == 2
    rep = json.loads(capsys.readouterr().out)
    assert not rep["valid"] and rep["errors"][0]["path"].startswith("/dd")


def test_validate_all_shipped_configs(configs_dir, capsys):
    for p in sorted(configs_dir.glob("*.json")):
        assert cli.main(["validate", "--config", str(p)]) == 0, p.name


def test_defaults_filled():
    eff, errs = config.validate({"command": "snr"})
    assert not errs
    assert eff["repetitions"] > 0 and "channel" in eff


def test_numeric_failure_exit_code(tmp_path, capsys):
    data = tmp_path / "flat.csv"
    data.write_text("t_s,value\n" + "".join(f"{i * 1e-6},0.3\n" for i in range(20)))
    cfg = write(tmp_path, "c.json", {"command": "fit", "input": "flat.csv", "model": "rabi"})
    assert run("fit", cfg, tmp_path / "o") == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "numeric_failure"


def test_missing_input_and_config(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"command": "fit", "input": "nope.csv", "model": "exp_only"})
    assert run("fit", cfg, tmp_path / "o") == 2
    assert run("fit", tmp_path / "absent.json", tmp_path / "o") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("snr", bad, tmp_path / "o") == 2


def test_command_mismatch(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"command": "snr"})
    assert run("holeburn", cfg, tmp_path / "o") == 2


def test_fit_recipe(tmp_path, configs_dir, capsys):
    out = tmp_path / "fit"
    assert run("fit", configs_dir / "fit_decay.json", out) == 0
    res = json.loads((out / "fit.json").read_text())
    assert res["converged"]
    rec = json.loads((out / "run_record.json").read_text())
    assert len(rec["input_digests"]) == 2


def test_dd_bench_residuals(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"command": "dd-bench", "sequences": ["XX"], "angle_errors_over_pi": [0.062],
                                     "detuning_fwhm": 0.0, "angle_scale_fwhm": 0.0})
    run("dd-bench", cfg, tmp_path / "o")
    lines = (tmp_path / "o" / "dd_bench.csv").read_text().splitlines()
    head = lines[0].split(",")
    row = dict(zip(head, lines[1].split(",")))
    assert float(row["residual_population"]) == pytest.approx(0.037461, abs=1e-5)


def test_schema_and_usage(capsys):
    assert cli.main(["schema", "snr"]) == 0
    assert json.loads(capsys.readouterr().out)["properties"]["command"]
    assert cli.main(["nonsense"]) == 2
    assert cli.main([]) == 2


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "c.json", {"command": "snr", "repetitions": 1000})
    p = subprocess.run([sys.executable, "-m", "nlpemem", "snr", "--config", str(cfg), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert p.returncode == 0, p.stderr
    p = subprocess.run([sys.executable, "-m", "nlpemem", "snr", "--config", str(cfg), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert p.returncode == 2 and json.loads(p.stderr)["exit_code"] == 2
