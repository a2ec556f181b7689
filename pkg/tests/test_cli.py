import json
import subprocess
import sys

import pytest

from compress_cert.cli import main

SMALL = {"scheme": "hull2", "distribution": {"kind": "uniform_cube", "dim": 2},
         "N": 40, "delta": 0.01, "trials": 4, "n_test_risk": 500, "n_test_phi": 50, "seed": 1}


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("COMPRESS_CERT_SEED", raising=False)


def write_cfg(tmp_path, **patch):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**SMALL, **patch}))
    return p


# --------------------------------------------------------------- bounds

def test_bounds_n1(tmp_path):
    assert main(["bounds", "--n", "1", "--delta", "0.1", "--out", str(tmp_path / "b.csv")]) == 0
    text = (tmp_path / "b_delta0.1.csv").read_text()
    assert text.endswith("\n")
    lines = text.splitlines()
    assert len(lines) == 3
    k, eps = lines[1].split(",")[2:4]
    assert k == "0" and float(eps) == pytest.approx(0.9, abs=1e-9)
    assert lines[2].split(",")[2:4] == ["1", "1"]


def test_bounds_several_deltas(tmp_path):
    argv = ["bounds", "--n", "20", "--out", str(tmp_path / "fig.csv")]
    for d in ("1e-3", "1e-6", "1e-9"):
        argv += ["--delta", d]
    assert main(argv) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["fig_delta0.001.csv", "fig_delta1e-06.csv", "fig_delta1e-09.csv"]


@pytest.mark.parametrize("argv", [
    ["bounds", "--n", "0", "--delta", "0.1", "--out", "x.csv"],
    ["bounds", "--n", "5", "--delta", "1.5", "--out", "x.csv"],
    ["bounds", "--n", "5", "--out", "x.csv"],
    ["bounds", "--n", "5", "--delta", "0.1", "--out", "x.csv", "--bogus"],
    [],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_bounds_write_failure(tmp_path):
    out = tmp_path / "missing" / "b.csv"
    assert main(["bounds", "--n", "3", "--delta", "0.1", "--out", str(out)]) == 1


# ------------------------------------------------------------- validate

def test_validate_hull_preference(capsys):
    assert main(["validate", "--scheme", "hull3", "--property", "preference", "--trials", "1000"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep == [{"property": "preference", "scheme": "hull3", "trials": 1000, "violations": 0}]


def test_validate_expected_counterexample(capsys, tmp_path):
    out = tmp_path / "ce.json"
    code = main(["validate", "--scheme", "second_largest", "--property", "coherence1",
                 "--expect-fail", "--out", str(out)])
    assert code == 3
    rep = json.loads(out.read_text())[0]
    assert rep["violations"] > 0
    ce = rep["counterexample"]
    top2 = sorted(z for z, _ in ce["U"])[-2:]
    assert top2[0] < ce["z"] < top2[1]


def test_validate_expect_fail_not_confirmed():
    assert main(["validate", "--scheme", "hull2", "--property", "idempotence", "--trials", "20",
                 "--expect-fail"]) == 4


def test_validate_undocumented_failure_is_reported_only(capsys):
    code = main(["validate", "--scheme", "second_largest", "--property", "coherence1",
                 "--trials", "300"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)[0]["violations"] > 0


def test_validate_documented_violation_exit(monkeypatch):
    import compress_cert.cli as cli
    from compress_cert.compression import CompressionScheme, Multiset

    broken = CompressionScheme("hull2", lambda U: Multiset(list(U)[: (len(U) + 1) // 2]))
    monkeypatch.setattr(cli, "make_scheme", lambda name, **kw: broken)
    assert main(["validate", "--scheme", "hull2", "--property", "preference", "--trials", "20"]) == 4


@pytest.mark.parametrize("argv", [
    ["validate", "--scheme", "nosuch"],
    ["validate", "--scheme", "hull2", "--property", "bogus"],
    ["validate", "--scheme", "trimming", "--property", "inclusion"],
    ["validate", "--scheme", "hull2", "--trials", "0"],
])
def test_validate_usage(argv):
    assert main(argv) == 2


def test_validate_default_properties_skip_inapplicable(capsys):
    assert main(["validate", "--scheme", "trimming", "--trials", "5"]) == 0
    props = {r["property"] for r in json.loads(capsys.readouterr().out)}
    assert props == {"preference", "idempotence", "non_assoc"}


def test_validate_seed_env(monkeypatch, capsys):
    argv = ["validate", "--scheme", "second_largest", "--property", "coherence1", "--trials", "200"]
    main(argv + ["--seed", "5"])
    a = capsys.readouterr().out
    monkeypatch.setenv("COMPRESS_CERT_SEED", "5")
    main(argv + ["--seed", "99"])
    assert capsys.readouterr().out == a


# ------------------------------------------------------------- simulate

def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "trials.csv"
    assert main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "trial,seed,k,risk_hat,phi_hat,eps,eps_low,eps_up,inside"
    assert len(rows) == 5
    summary = json.loads((tmp_path / "trials_summary.json").read_text())
    assert summary["trials"] == 4 and 0 <= summary["coverage"] <= 1
    assert summary["config"]["N"] == 40
    assert (tmp_path / "trials_summary.json").read_text().endswith("\n")


def test_simulate_zero_trials(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["simulate", "--config", str(write_cfg(tmp_path, trials=0)), "--out", str(out)]) == 0
    assert out.read_text() == "trial,seed,k,risk_hat,phi_hat,eps,eps_low,eps_up,inside\n"


def test_simulate_deterministic(tmp_path):
    cfg = str(write_cfg(tmp_path))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    sa = json.loads((tmp_path / "a_summary.json").read_text())
    sb = json.loads((tmp_path / "b_summary.json").read_text())
    assert sa == sb


def test_simulate_seed_override(tmp_path, monkeypatch):
    cfg = str(write_cfg(tmp_path))
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    main(["simulate", "--config", cfg, "--out", str(a)])
    main(["simulate", "--config", cfg, "--out", str(b), "--seed", "2"])
    assert a.read_text() != b.read_text()
    monkeypatch.setenv("COMPRESS_CERT_SEED", "2")
    main(["simulate", "--config", cfg, "--out", str(c), "--seed", "7"])
    assert c.read_text() == b.read_text()


def test_simulate_bad_config(tmp_path, capsys):
    code = main(["simulate", "--config", str(write_cfg(tmp_path, N=0)), "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "N:" in capsys.readouterr().err


def test_simulate_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x.csv")]) == 1


def test_report_roundtrip(tmp_path, capsys):
    out = tmp_path / "t.csv"
    main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(out)])
    summary = json.loads((tmp_path / "t_summary.json").read_text())
    capsys.readouterr()
    assert main(["report", "--trials", str(out), "--delta", "0.01"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["coverage"] == summary["coverage"]
    assert rep["k_max"] == summary["k_max"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "compress_cert", "bounds", "--n", "2", "--delta", "0.5",
                           "--out", str(tmp_path / "m.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m_delta0.5.csv").exists()
