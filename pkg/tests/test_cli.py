import json

import pytest

from kgadiabatic import cli
from kgadiabatic.poly import loads

SMALL = {
    "params": {"N": 8, "eps": 0.05, "beta": 10.0},
    "n": 2,
    "n_range": [1, 2],
    "sampler": {"n_chains": 20, "kept": 100, "burn_in": 200},
    "integrator": {"ensemble": 60, "t_max": 5.0, "n_times": 8},
    "decay": {"N": 8, "eps_grid": [0.0, 0.05]},
}


def write_config(tmp_path, override, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(override))
    return str(path)


def run(tmp_path, command, override=SMALL, out="out", extra=()):
    cfg = write_config(tmp_path, override)
    outdir = tmp_path / out
    code = cli.main([command, "--config", cfg, "--out", str(outdir), *extra])
    return code, outdir


def test_default_config_is_valid():
    cfg = cli.validate_config(cli.default_config())
    assert cfg["schema"] == cli.CONFIG_SCHEMA


def test_invalid_beta_names_the_field(tmp_path, capsys):
    code, out = run(tmp_path, "build-invariant", {"params": {"beta": -1.0}})
    assert code == 2
    assert "params.beta" in capsys.readouterr().err
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 2


def test_unknown_field_is_rejected(tmp_path, capsys):
    code, _ = run(tmp_path, "build-invariant", {"params": {"temperature": 1.0}})
    assert code == 2
    assert "params.temperature: unknown field" in capsys.readouterr().err


def test_invalid_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.main(["oracle", "--config", str(path)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


@pytest.mark.parametrize("override", [
    {"n": 9}, {"seed": -1}, {"sampler": {"kept": 1, "n_chains": 1}},
    {"integrator": {"dt": 1.0}}, {"decay": {"N": 20}}, {"verify": {"criteria": [12]}},
    {"n_range": [3, 1]}, {"params": {"N": 2.5}},
])
def test_field_validation(override):
    with pytest.raises(cli.ConfigError):
        cli.validate_config(cli._merge(cli.default_config(), override))


def test_environment_and_flags(tmp_path):
    env = {"KGADIABATIC_OUT": str(tmp_path / "env"), "KGADIABATIC_THREADS": "1"}
    cfg = cli.load_config(None, None, env)
    assert cfg["out"] == env["KGADIABATIC_OUT"] and cfg["threads"] == 1
    args = cli.build_parser().parse_args(["decay", "--out", "flag", "--seed", "7"])
    cfg = cli.load_config(None, args, env)
    assert cfg["out"] == "flag" and cfg["seed"] == 7
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, None, {"KGADIABATIC_THREADS": "many"})


def test_build_invariant_outputs(tmp_path):
    code, out = run(tmp_path, "build-invariant")
    assert code == 0
    inv = json.loads((out / "invariant.json").read_text())
    assert inv["schema_version"] == cli.SCHEMA_VERSION
    structure = json.loads((out / "structure.json").read_text())
    assert structure["report"]["ok"] and structure["xdot_crosscheck"] < 1e-10
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and all(t["status"] == "ok" for t in man["tasks"])


def test_invariant_json_roundtrip(tmp_path):
    from kgadiabatic.model import ModelParams
    from kgadiabatic.normal_form import build_invariant
    from kgadiabatic.poly import dumps

    inv = build_invariant(ModelParams(8, 0.05, beta=10.0), 2)
    back = loads(dumps([inv.Xn, inv.Xn_dot]))
    assert back[0].terms == inv.Xn.terms and back[1].terms == inv.Xn_dot.terms


def test_term_cap_trips_the_guard(tmp_path, capsys):
    override = dict(SMALL, term_cap=10)
    code, out = run(tmp_path, "build-invariant", override)
    assert code == 3
    assert "DivergenceGuard" in capsys.readouterr().err
    man = json.loads((out / "manifest.json").read_text())
    assert man["tasks"][-1]["status"] == "error"


def test_every_json_artifact_is_versioned(tmp_path):
    for command in ("estimate", "decay", "oracle", "autocorr"):
        code, out = run(tmp_path, command, out=command)
        assert code == 0, command
        for path in out.glob("*.json"):
            assert json.loads(path.read_text())["schema_version"] == cli.SCHEMA_VERSION
        for path in out.glob("*.csv"):
            assert path.read_text().startswith(f"# schema_version: {cli.SCHEMA_VERSION}")


def test_runs_are_byte_identical(tmp_path):
    for command in ("estimate", "decay"):
        _, a = run(tmp_path, command, out=f"{command}-a")
        _, b = run(tmp_path, command, out=f"{command}-b")
        csvs = sorted(p.name for p in a.glob("*.csv"))
        assert csvs
        for name in csvs:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_changes_samples(tmp_path):
    _, a = run(tmp_path, "estimate", out="s0")
    _, b = run(tmp_path, "estimate", out="s1", extra=("--seed", "1"))
    assert (a / "n_scan.csv").read_bytes() != (b / "n_scan.csv").read_bytes()


def test_version_and_help(capsys):
    assert cli.main(["--version"]) == 0
    assert cli.__version__ in capsys.readouterr().out
    assert cli.main(["no-such-command"]) == 2
