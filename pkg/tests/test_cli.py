import json

import pytest

from paralab import cli


def test_defaults_resolve_for_every_experiment():
    for name in cli.EXPERIMENTS:
        cfg = cli.build_config(name)
        assert cfg["seed"] == 0


@pytest.mark.parametrize("args", [
    ["tail-sweep", "--set", "alpha=0.5"],
    ["tail-sweep", "--set", "alpha_prime=0.4"],
    ["cusp-spectrum", "--set", "n=64"],
    ["tail-sweep", "--set", "n=256"],
    ["solve", "--set", "n=100"],
    ["solve", "--set", "bogus=1"],
    ["solve", "--set", "data=vortex"],
    ["parametrix", "--set", "n=128"],
    ["koch", "--set", "delta=2"],
    ["identities", "--set", "dt=1.0"],
])
def test_config_errors_exit_2(args, tmp_path, capsys):
    assert cli.main(args + ["--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_config_file_must_be_flat(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n": {"a": 1}}))
    with pytest.raises(cli.ConfigError):
        cli.build_config("solve", p)
    p.write_text(json.dumps({"n": 64, "T": 1.0}))
    cfg = cli.build_config("solve", p, seed=7, overrides={"T": 2.0})
    assert (cfg["n"], cfg["T"], cfg["seed"]) == (64, 2.0, 7)


def test_show_config(capsys):
    assert cli.main(["probe", "--show-config", "--set", "eps=0.125"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["eps"] == 0.125


def test_solve_runs_and_is_deterministic(tmp_path):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        rc = cli.main(["solve", "--set", "n=64", "--set", "T=1", "--out", str(d)])
        assert rc == 0
        outs.append(d)
    for fname in ("trajectory.csv", "manifest.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
    man = json.loads((outs[0] / "manifest.json").read_text())
    assert man["passed"] and man["experiment"] == "solve"


def test_failed_check_exits_1(tmp_path):
    # a fit window inside the pre-asymptotic range misses the tail exponent
    rc = cli.main(["cusp-spectrum", "--set", "n=256", "--set", "window=[2,6]", "--out", str(tmp_path)])
    assert rc == 1
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["checks"]["slope"] is False
