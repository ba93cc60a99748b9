import json

import pytest

from lindjump.cli import main

from conftest import SLOW_SF, LIGHT_AB


@pytest.fixture
def configs(tmp_path):
    paths = {}
    for name, doc in [("slow_sf", SLOW_SF), ("light_ab", dict(LIGHT_AB, scheme="PhotonAndConfig"))]:
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        paths[name] = p
    return paths


def test_validate_prints_rates(configs, capsys):
    assert main(["validate", str(configs["slow_sf"])]) == 0
    out = capsys.readouterr().out
    assert "phi_tilde_R" in out and "p_inf" in out and "slow" in out


def test_validate_rejects_bad_config(tmp_path, capsys):
    bad = dict(SLOW_SF, decay=[1.0, -2.0])
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert main(["validate", str(p)]) == 2
    assert "decay" in capsys.readouterr().err


def test_validate_rejects_broken_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["validate", str(p)]) == 2


def test_missing_config_is_runtime_error(tmp_path):
    assert main(["validate", str(tmp_path / "missing.json")]) in (1, 2)


def test_simulate_reproducible(configs, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", str(configs["light_ab"]), "--events", "2000", "--seed", "7", "--out", str(out)]) == 0
    for ext in (".events.csv", ".traces.csv"):
        assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()
    man = json.loads((tmp_path / "a.manifest.json").read_text())
    assert man["seeds"] == [7] and man["n_events"] == 2000 and man["spec"]["scheme"] == "PhotonAndConfig"
    assert man["spec_hash"] and man["algorithm"] == "coarse"


def test_seed_from_environment(configs, tmp_path, monkeypatch):
    monkeypatch.setenv("LINDJUMP_SEED", "7")
    assert main(["simulate", str(configs["slow_sf"]), "--events", "300", "--no-traces", "--out", str(tmp_path / "e")]) == 0
    monkeypatch.delenv("LINDJUMP_SEED")
    assert main(["simulate", str(configs["slow_sf"]), "--events", "300", "--no-traces", "--seed", "7",
                 "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "e.events.csv").read_bytes() == (tmp_path / "s.events.csv").read_bytes()
    assert not (tmp_path / "e.traces.csv").exists()


def test_zero_events_writes_manifest_only(configs, tmp_path):
    assert main(["simulate", str(configs["slow_sf"]), "--events", "0", "--out", str(tmp_path / "z")]) == 0
    assert (tmp_path / "z.manifest.json").exists()
    assert not (tmp_path / "z.events.csv").exists()


def test_simulate_needs_stop(configs, tmp_path):
    assert main(["simulate", str(configs["slow_sf"]), "--out", str(tmp_path / "x")]) == 2


def test_fine_and_burn_in(configs, tmp_path):
    assert main(["simulate", str(configs["slow_sf"]), "--events", "30", "--algorithm", "fine", "--dt", "0.001",
                 "--burn-in", "--no-traces", "--out", str(tmp_path / "f")]) == 0
    man = json.loads((tmp_path / "f.manifest.json").read_text())
    assert man["burn_in"] == 100 and man["algorithm"] == "fine(dt=0.001)"
    assert len((tmp_path / "f.events.csv").read_text().splitlines()) == 31


def test_ensemble(configs, tmp_path):
    assert main(["simulate", str(configs["slow_sf"]), "--time", "5", "--init", "ground", "--p", "0.5,0.5",
                 "--trajectories", "8", "--trace-dt", "1", "--out", str(tmp_path / "ens")]) == 0
    rows = (tmp_path / "ens.ensemble.csv").read_text().splitlines()
    assert rows[0].startswith("t,upper_mean,upper_se") and len(rows) == 7


def test_dark_state_exit(tmp_path):
    doc = dict(kind="SelfFluctuating", scheme="PhotonOnly", r_max=1, rabi=[0.0], detuning=[0.0], decay=[1.0],
               config_rates=[[0.0]])
    p = tmp_path / "dark.json"
    p.write_text(json.dumps(doc))
    assert main(["simulate", str(p), "--events", "5", "--init", "ground", "--out", str(tmp_path / "d")]) == 1
    assert (tmp_path / "d.events.csv").exists()


@pytest.mark.parametrize("obj", ["w1", "w2", "lambda", "master", "slowlimit"])
def test_analytic_objects(configs, tmp_path, obj):
    out = tmp_path / f"{obj}.csv"
    assert main(["analytic", str(configs["slow_sf"]), "--object", obj, "--points", "21", "--out", str(out)]) == 0
    assert out.exists()
    man = json.loads((tmp_path / f"{obj}.csv.manifest.json").read_text())
    assert man["object"] == obj and str(out) in man["outputs"]


def test_analytic_wst_needs_p(configs, tmp_path):
    out = str(tmp_path / "w.csv")
    assert main(["analytic", str(configs["slow_sf"]), "--object", "wst", "--out", out]) == 2
    assert main(["analytic", str(configs["slow_sf"]), "--object", "wst", "--p", "1,0", "--out", out]) == 0


def test_slowlimit_rejects_light_assisted(configs, tmp_path):
    assert main(["analytic", str(configs["light_ab"]), "--object", "slowlimit", "--out", str(tmp_path / "s.csv")]) == 2


def test_compare_pass_and_fail(configs, tmp_path, capsys):
    ok = tmp_path / "ok"
    assert main(["compare", str(configs["light_ab"]), "--traj-events", "50000", "--out", str(ok)]) == 0
    report = json.loads((ok / "report.json").read_text())
    assert report["pass"] and "w2_symmetry" in report["checks"]
    assert main(["compare", str(configs["slow_sf"]), "--traj-events", "20000", "--against", str(configs["light_ab"]),
                 "--out", str(tmp_path / "bad")]) == 3
    assert "w1_ks" in capsys.readouterr().err


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
