import json

import pytest
from hypothesis import given, settings, strategies as st

from gibbsroute.cli import main
from gibbsroute.config import EXPERIMENTS, ConfigError, defaults_for, load_config, parse_config
from gibbsroute.experiments import run
from gibbsroute.manifest import Manifest, strip_timestamps, write_csv


def test_defaults_validate():
    for exp in EXPERIMENTS:
        cfg = parse_config(defaults_for(exp), exp)
        assert cfg.experiment == exp


def test_missing_gamma_is_named():
    data = defaults_for("mcmc")
    del data["gamma"]
    with pytest.raises(ConfigError) as exc:
        parse_config(data, "mcmc")
    assert exc.value.key == "gamma"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config({**defaults_for("relay-map"), "gama": 1.0}, "relay-map")
    assert exc.value.key == "gama"


@pytest.mark.parametrize(
    "key,value",
    [("gamma", -1.0), ("radius", 0.0), ("kmax", 0), ("dimension", 3), ("alpha", -2.0), ("pathloss_kind", "cubic"), ("kmax", 1.5)],
)
def test_preconditions_named(key, value):
    with pytest.raises(ConfigError) as exc:
        parse_config({**defaults_for("mcmc"), key: value}, "mcmc")
    assert exc.value.key == key


def test_asymptotics_validation():
    with pytest.raises(ConfigError) as exc:
        parse_config({**defaults_for("asymptotics"), "r0_list": [0.5]}, "asymptotics")
    assert exc.value.key == "r0_list"


def test_experiment_mismatch():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "game", "beta": 1}, "mcmc")


def test_kv_and_json_files_agree(tmp_path):
    kv = tmp_path / "a.cfg"
    kv.write_text("# mcmc run\nexperiment = mcmc\ndimension = 1\nradius = 2\nalpha = 4\npathloss_kind = shifted\n"
                  "gamma = 0.5\nbeta = 0.3\nkmax = 2\nn_users = 4\nsteps = 100\n")
    cfg = load_config(kv)
    js = tmp_path / "a.json"
    js.write_text(cfg.dumps())
    assert load_config(js).to_dict() == cfg.to_dict()


@settings(max_examples=40)
@given(st.sampled_from(EXPERIMENTS), st.integers(0, 2**31), st.integers(1, 8))
def test_config_roundtrip(exp, seed, threads):
    cfg = parse_config({**defaults_for(exp), "seed": seed, "threads": threads}, exp)
    again = parse_config(json.loads(cfg.dumps()))
    assert again == cfg and again.dumps() == cfg.dumps()


def test_manifest_empty_and_tags(tmp_path):
    m = Manifest("game")
    d = m.to_dict(created="t")
    assert d["results"] == [] and d["files"] == []
    with pytest.raises(ValueError):
        m.add("x", 1, "guess")


def test_csv_exact_floats(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["a", "b"], [(0.1, 1), (1 / 3, True)])
    assert p.read_text() == "a,b\n0.10000000000000001,1\n0.33333333333333331,1\n"


def _run_twice(tmp_path, exp, **over):
    outs = []
    for name in ("a", "b"):
        cfg = parse_config({**defaults_for(exp), **over}, exp)
        man = run(cfg, tmp_path / name)
        outs.append(json.loads((tmp_path / name / "manifest.json").read_text()))
    return outs


@pytest.mark.parametrize("exp,over", [("game", {}), ("mcmc", {"steps": 5000}), ("anneal", {"runs": 3, "t_max": 500}),
                                      ("dense-subarea", {"n_grid": 24})])
def test_reruns_identical(tmp_path, exp, over):
    a, b = _run_twice(tmp_path, exp, **over)
    assert json.dumps(strip_timestamps(a), sort_keys=True) == json.dumps(strip_timestamps(b), sort_keys=True)
    for f in a["files"]:
        assert (tmp_path / "a" / f["path"]).read_bytes() == (tmp_path / "b" / f["path"]).read_bytes()


def test_threads_do_not_change_data(tmp_path):
    res = {}
    for t in (1, 3):
        cfg = parse_config({**defaults_for("anneal"), "runs": 4, "t_max": 500, "threads": t}, "anneal")
        man = run(cfg, tmp_path / str(t))
        res[t] = {f["path"]: f["sha256"] for f in man.files}
    assert res[1] == res[3]


def test_cli_game(tmp_path, capsys):
    assert main(["game", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "non_selfish = True" in out
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["seed"] == 0 and man["files"][0]["path"] == "game_report.json"


def test_cli_validation_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    data = defaults_for("mcmc")
    del data["gamma"]
    cfg.write_text(json.dumps({"experiment": "mcmc", **data}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "gamma" in capsys.readouterr().err
    assert main(["run"]) == 2
    assert main(["mcmc", "--set", "bogus=1"]) == 2


def test_cli_flags_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "game", "beta": "1", "seed": 3}))
    assert main(["run", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 9 and man["config"]["beta"] == 1.0
    assert man["results"][0] == {"flagged": False, "name": "n_nash", "tag": "reference", "value": 3}


def test_limit_profiles_files(tmp_path):
    cfg = parse_config({**defaults_for("limit-profiles"), "n_radii": 6, "n_nu2": 5, "gammas": [0, 1]}, "limit-profiles")
    man = run(cfg, tmp_path)
    names = sorted(f["path"] for f in man.files)
    assert names == ["nu1_gamma_0.csv", "nu1_gamma_1.csv", "nu1_gamma_inf.csv", "nu2_logdensity.csv"]
    rows = (tmp_path / "nu1_gamma_0.csv").read_text().splitlines()
    assert rows[0] == "radius,nu1_density" and len(rows) == 7
    assert man.result("transition_radius") == pytest.approx(1.18913, abs=1e-5)
