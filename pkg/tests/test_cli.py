import json
import os
import subprocess
import sys

import pytest

from otfsidet import cli
from otfsidet.cli import ConfigError, ExperimentConfig, load_config, main

SMALL = ["--set", "realizations=1", "--set", "lam_list=[0.1]", "--set", "speed_list=[300]", "--set", "err_var_list=[0.0]"]


def run_cli(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out.read_bytes() if out.exists() else b""


def test_config_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.system().p_o == pytest.approx(3.974, rel=1e-3)
    assert cli.doppler_bound(cfg, 300) == 6 and cli.doppler_bound(cfg, 30) == 1


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4, "r_min": 10.0, "trials": 50}))
    cfg = load_config(str(path), {"seed": 9, "trials": None})
    assert cfg.seed == 9 and cfg.r_min == 10.0 and cfg.trials == 50


@pytest.mark.parametrize(
    "bad",
    [
        {"p_pilot_dbm": 40.0},
        {"realizations": 0},
        {"lam_list": []},
        {"waveform": "fbmc"},
        {"schema_version": 99},
        {"no_such_key": 1},
        {"lam": 2.0},
    ],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        load_config(None, bad)


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["design", "--set", "p_pilot_dbm=40"]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_hash_ignores_execution_fields():
    a = ExperimentConfig(threads=1, out=None)
    b = ExperimentConfig(threads=4, out="x.csv")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()


def test_channel_gen(tmp_path):
    code, raw = run_cli(["channel-gen", "--set", "realizations=2", "--seed", "3"], tmp_path)
    assert code == 0
    d = json.loads(raw)
    assert d["meta"]["seed"] == 3 and d["meta"]["version"]
    assert len(d["channels"]) == 2 * 3
    # one realization shares delays and gains across speeds
    same = [c for c in d["channels"] if c["realization"] == 0]
    assert len({json.dumps([p["gain_est"] for p in c["paths"]]) for c in same}) == 1
    assert {c["k_max"] for c in same} == {1, 3, 6}


def test_design_rate_free(tmp_path):
    code, raw = run_cli(["design", "--set", "r_min=0"], tmp_path)
    assert code == 0
    sol = json.loads(raw)["solutions"]["otfs"]
    assert sol["converged"]
    assert sol["energy_only"] == (sol["data_power_fraction"] <= 0.01)
    assert sol["trace"]


def test_design_infeasible_exit(tmp_path):
    code, raw = run_cli(["design", "--set", "r_min=5000"], tmp_path)
    assert code == cli.EXIT_INFEASIBLE
    assert json.loads(raw)["error"]["kind"] == "infeasible"


def test_sweep_csv(tmp_path):
    code, raw = run_cli(["sweep"] + SMALL + ["--set", 'waveform="both"', "--trials", "200"], tmp_path)
    assert code == 0
    lines = raw.decode().splitlines()
    assert [l.split(":")[0] for l in lines[:4]] == ["# version", "# command", "# seed", "# config_hash"]
    assert lines[4].startswith("r_min,lambda,speed_kmh,err_var,realization,waveform")
    rows = lines[5:]
    assert len(rows) == 4 and rows[0].split(",")[5] == "otfs" and rows[1].split(",")[5] == "ofdm"


def test_sweep_threads_do_not_change_output(tmp_path):
    args = ["sweep", "--set", "realizations=2", "--set", "lam_list=[0.1]", "--set", "speed_list=[30]",
            "--set", "err_var_list=[0.0]", "--set", "max_outer=4"]
    _, one = run_cli(args + ["--threads", "1"], tmp_path, "a")
    _, two = run_cli(args + ["--threads", "2"], tmp_path, "b")
    assert one == two


def test_validate_passes(tmp_path):
    code, raw = run_cli(["validate", "--trials", "2000", "--set", "max_outer=3"], tmp_path)
    assert code == 0
    checks = {c["name"]: c["passed"] for c in json.loads(raw)["checks"]}
    assert checks == {"psi_yd2": True, "psi_ye2": True, "psi_yd4": True, "psi_ye4_exact": True, "rate": True}


def test_validate_small_trials_widens_band(tmp_path, caplog):
    code, _ = run_cli(["validate", "--trials", "10", "--set", "max_outer=2"], tmp_path)
    assert code == 0
    assert "widening" in caplog.text


def test_compare_csv(tmp_path):
    code, raw = run_cli(["compare", "--set", "realizations=1", "--set", "speed_list=[300]", "--trials", "300",
                         "--set", "max_outer=6"], tmp_path)
    assert code == 0
    rows = [l.split(",") for l in raw.decode().splitlines() if not l.startswith("#")]
    assert rows[0][:5] == ["speed_kmh", "realization", "otfs_i_out", "ofdm_i_out", "gap"]
    assert rows[-1][1] == "mean"


def test_byte_identical_across_processes(tmp_path):
    # fresh interpreters with different hash seeds
    outs = []
    for h in ("1", "2"):
        out = tmp_path / f"d{h}.json"
        env = dict(os.environ, PYTHONHASHSEED=h)
        subprocess.run(
            [sys.executable, "-m", "otfsidet.cli", "design", "--seed", "5", "--set", "max_outer=6", "--out", str(out)],
            check=True,
            env=env,
        )
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
