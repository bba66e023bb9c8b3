import csv
import json

import numpy as np
import pytest

from radshock.cli import load_config, main

FAST_SIM = ["--set", "simulate.T_final=16", "--set", "simulate.h=0.1",
            "--set", "simulate.X_dom=40"]
FAST_EVANS = ["--set", "evans.oracle_N=400", "--set", "evans.double_R=false"]


def read(path):
    return path.read_bytes()


def test_verify_ok(tmp_path):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    rep = json.loads(read(tmp_path / "assumptions.json"))
    assert rep["schema_version"] == 1 and rep["report"]["passed"]
    cfg = (tmp_path / "effective_config.ini").read_text()
    assert "[model]" in cfg and "preset = burgers-linear" in cfg


def test_verify_inverted_states(tmp_path, capsys):
    code = main(["verify", "--out", str(tmp_path), "--set", "model.u_minus=-0.2",
                 "--set", "model.u_plus=0.2"])
    assert code == 2
    assert "A3" in capsys.readouterr().err


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\npreset = burgers-linear\n[profile\nh = 1e-3\n")
    assert main(["verify", "-c", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "bad.ini" in err and "line" in err


def test_unknown_key(tmp_path):
    assert main(["verify", "--out", str(tmp_path), "--set", "profile.hh=1"]) == 1


def test_missing_model(tmp_path):
    assert main(["profile", "--out", str(tmp_path), "--set", "model.preset="]) == 1


def test_custom_model(tmp_path):
    cfg = tmp_path / "m.ini"
    cfg.write_text("[model]\nf = 0, 0, 1/2\nM = 0, 1\nL = 1\nu_minus = 0.2\nu_plus = -0.2\n")
    assert main(["verify", "-c", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_profile_csv_and_refine(tmp_path):
    assert main(["profile", "--refine", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "profile.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["x", "U"]
    U = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(U) < 0)
    rep = json.loads(read(tmp_path / "profile_report.json"))
    assert rep["refine"]["h"] == 5e-4
    assert rep["refine"]["max_node_change"] < 1e-9
    assert b"\r" not in read(tmp_path / "profile.csv")


def test_evans_budget_inconclusive(tmp_path):
    assert main(["evans", "--budget", "1", "--out", str(tmp_path)] + FAST_EVANS) == 3
    assert json.loads(read(tmp_path / "winding.json"))["condition_D"] == "inconclusive"


def test_evans_verified(tmp_path):
    assert main(["evans", "--out", str(tmp_path)]) == 0
    rep = json.loads(read(tmp_path / "winding.json"))
    assert rep["condition_D"] == "verified" and rep["oracle_agrees"]
    assert rep["winding"]["circle_minus"]["winding"] == 1
    hdr = (tmp_path / "evans_punctured_minus.csv").read_text().splitlines()[0]
    assert hdr == "re_lambda,im_lambda,re_D,im_D,scale_log"


def test_simulate_guard(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "simulate.amplitude=0.5"]
                + FAST_SIM) == 2
    assert json.loads(read(tmp_path / "simulate.json"))["aborted"]


def test_simulate_short_window(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--set", "simulate.T_final=2"]) == 1
    assert "T_final" in capsys.readouterr().err


def test_simulate_outputs(tmp_path):
    code = main(["simulate", "--out", str(tmp_path)] + FAST_SIM)
    assert code in (0, 2)
    hdr = (tmp_path / "decay.csv").read_text().splitlines()[0]
    assert hdr == "t,L1,L2,Linf,alpha,alpha_dot,E_1"
    rep = json.loads(read(tmp_path / "simulate.json"))
    assert set(rep["bands"]) == {"Linf", "L2", "alpha_dot"}
    assert code == (0 if all(b["pass"] for b in rep["bands"].values())
                    and rep["energy"]["violations"] == 0 else 2)


def _outputs(d):
    return {p.name: read(p) for p in sorted(d.iterdir()) if p.name != "effective_config.ini"}


def test_determinism_and_replay(tmp_path):
    args = FAST_SIM + FAST_EVANS + ["--set", "evans.n_init=24"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d in (a, b):
        for cmd in ("profile", "evans", "simulate"):
            main([cmd, "--out", str(d)] + args)
    oa, ob = _outputs(a), _outputs(b)
    assert oa.keys() == ob.keys() and len(oa) >= 8
    for k in oa:
        assert oa[k] == ob[k], k
    # re-execution from the emitted effective config
    for cmd in ("profile", "evans", "simulate"):
        main([cmd, "-c", str(a / "effective_config.ini"), "--out", str(c)])
    oc = _outputs(c)
    for k in oa:
        assert oa[k] == oc[k], k


def test_overrides_take_precedence(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[profile]\nh = 2e-3\n")
    cp = load_config(str(f), ["profile.h=5e-4"])
    assert cp["profile"]["h"] == "5e-4"
    with pytest.raises(ValueError):
        load_config(None, ["nosection"])
