import csv
import filecmp
import os

import pytest
import tomli_w

from oqcontrol import cli
from oqcontrol import config as cfgmod


def _write(tmp_path, scenario, name="cfg.toml", **changes):
    raw = cfgmod.raw_loads(cfgmod.emit_default_config(scenario))
    for key, value in changes.items():
        target = raw
        parts = key.split("__")
        for p in parts[:-1]:
            target = target[p]
        target[parts[-1]] = value
    path = tmp_path / name
    path.write_text(tomli_w.dumps(raw), encoding="utf-8")
    return str(path)


def _summary(path):
    with open(path, encoding="utf-8") as fh:
        return {r["key"]: r["value"] for r in csv.DictReader(fh)}


def test_list(capsys):
    assert cli.main(["list"]) == cli.EXIT_OK
    ids = [l.split("\t")[0] for l in capsys.readouterr().out.splitlines()]
    assert ids == list(cfgmod.SCENARIOS)


def test_init_writes_loadable_default(tmp_path):
    path = tmp_path / "c.toml"
    assert cli.main(["init", "case1-maxoverlap", str(path)]) == cli.EXIT_OK
    text = path.read_text(encoding="utf-8")
    assert "mu = 50.0" in text and "n_max = 10.0" in text
    assert cfgmod.load(str(path))["scenario"] == "case1-maxoverlap"
    assert cli.main(["init", "case9", str(tmp_path / "x.toml")]) == cli.EXIT_CONFIG


def test_invalid_configs_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('scenario = "case3"\noutput = "x"\n', encoding="utf-8")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert "unknown scenario" in capsys.readouterr().err
    bad.write_text(cfgmod.emit_default_config("free-evolution") + "extra = 1\n", encoding="utf-8")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert "line " in capsys.readouterr().err
    bad.write_text("N = [\n", encoding="utf-8")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == cli.EXIT_CONFIG
    good = _write(tmp_path, "free-evolution", output=str(tmp_path / "o"))
    assert cli.main(["run", good, "--workers", "0"]) == cli.EXIT_CONFIG


def test_free_evolution_run(tmp_path):
    out = tmp_path / "fe"
    path = _write(tmp_path, "free-evolution", output=str(out))
    assert cli.main(["run", path]) == cli.EXIT_OK
    s = _summary(out / "summary.csv")
    assert 4.3e-5 <= float(s["I"]) <= 4.8e-5
    assert float(s["closed_form_rel_dev"]) <= 1e-9
    assert s["verdict.I_min"] == "pass" and s["exit_code"] == "0"
    for name in ("trajectory", "control"):
        assert (out / f"{name}.csv").exists() and (out / f"{name}.png").exists()


def test_no_figures_and_byte_identical_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    path = _write(tmp_path, "pmp-check", T=20.0, N=2000, pmp__draws=2)
    assert cli.main(["run", path, "--output", str(a), "--no-figures"]) == cli.EXIT_OK
    assert cli.main(["run", path, "--output", str(b), "--no-figures"]) == cli.EXIT_OK
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    assert not any(n.endswith(".png") for n in names)
    data = [n for n in names if n != "summary.csv"]
    assert data == ["pmp.csv", "zero_control_K.csv"]
    match, mismatch, errors = filecmp.cmpfiles(a, b, data, shallow=False)
    assert match == data and not mismatch and not errors
    s = _summary(a / "summary.csv")
    assert s["verdict.pmp_satisfied"] == "pass" and s["draws"] == "4"


def test_pmp_run_with_figures(tmp_path):
    out = tmp_path / "p"
    path = _write(tmp_path, "pmp-check", output=str(out), T=20.0, N=2000, pmp__draws=1,
                  pmp__interactions=["V2"])
    assert cli.main(["run", path]) == cli.EXIT_OK
    assert (out / "zero_control_K.png").exists()


def test_budget_exit_code(tmp_path):
    run = {"name": "short", "method": "krotov", "variant": "rho", "regularized": True, "s": 1,
           "alpha": 1.0, "c0": [0.0, 0.0, 1.0], "max_iters": 100, "cauchy_budget": 4,
           "thresholds": {"I_max": 1e-6}}
    path = _write(tmp_path, "case1-maxoverlap", output=str(tmp_path / "b"), N=500, runs=[run])
    assert cli.main(["run", path, "--no-figures"]) == cli.EXIT_BUDGET
    s = _summary(tmp_path / "b" / "summary.csv")
    assert s["short.status"] == "budget" and s["budget_exhausted"] == "1"


def test_threshold_miss_exit_code(tmp_path):
    path = _write(tmp_path, "free-evolution", output=str(tmp_path / "m"), N=1000, T=10.0)
    assert cli.main(["run", path, "--no-figures"]) == cli.EXIT_FAIL


def test_env_var_workers(tmp_path, monkeypatch):
    path = _write(tmp_path, "pmp-check", output=str(tmp_path / "w"), T=10.0, N=1000,
                  pmp__draws=1)
    monkeypatch.setenv("OQCONTROL_WORKERS", "2")
    summary = cli.run_scenario(cfgmod.load(path), figures=False)
    assert summary.exit_code == cli.EXIT_OK


def test_seed_option(tmp_path):
    assert cli.parse_seeds("s0..s9") == list(range(10))
    assert cli.parse_seeds("0..2") == [0, 1, 2]
    assert cli.parse_seeds("1, 4,7") == [1, 4, 7]
    assert cli.parse_seeds("s3") == [3]
    for bad in ("5..1", "a,b"):
        with pytest.raises(Exception):
            cli.parse_seeds(bad)
    args = cli.build_parser().parse_args(["run", "x.toml", "--seed", "s2..s4"])
    assert args.seed == [2, 3, 4]


def test_threshold_verdicts():
    th = {"I_min": 0.005, "I_max": 0.05, "cauchy_max": 10}
    v = cli.threshold_verdicts(th, I=0.01, cauchy=12, prefix="r.", I_lowest=0.004)
    assert v == {"r.I_min": False, "r.I_max": True, "r.cauchy_max": False}
    s = cli.RunSummary("x", verdicts={"a": True}, budget_exhausted=True)
    assert s.exit_code == cli.EXIT_OK
    s.verdicts["b"] = False
    assert s.exit_code == cli.EXIT_BUDGET
