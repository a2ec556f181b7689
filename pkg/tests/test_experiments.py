import csv
import io
import json
import math

import numpy as np
import pytest

from compress_cert.bounds import bound_table
from compress_cert.compression import CompressionScheme, Multiset
from compress_cert.experiments import (
    TRIALS_HEADER,
    ConfigError,
    Distribution,
    ExperimentConfig,
    TrialResult,
    binomial_slack,
    coverage_report,
    estimate_phi,
    estimate_risk,
    load_config,
    parse_config,
    run_trial,
    run_trials,
    trial_seed,
    trials_csv,
)
from compress_cert.schemes import make_scheme
from compress_cert.schemes.svm import LabeledBatch

BASE = {"scheme": "hull3", "distribution": {"kind": "gaussian", "dim": 3},
        "N": 50, "delta": 1e-3, "trials": 3, "n_test_risk": 2000, "n_test_phi": 100}


# ---------------------------------------------------------------- laws

def test_draw_shapes():
    rng = np.random.default_rng(0)
    assert Distribution("gaussian", dim=3).draw(rng, 7).shape == (7, 3)
    u = Distribution("uniform_cube", dim=2, lo=-1, hi=2).draw(rng, 500)
    assert u.min() >= -1 and u.max() < 2
    b = Distribution("labeled_blobs", dim=2).draw(rng, 9)
    assert isinstance(b, LabeledBatch) and set(b.y) <= {-1.0, 1.0}
    line = Distribution("noisy_line", slope=2.0, intercept=1.0, noise=1e-9).draw(rng, 5)
    np.testing.assert_allclose(line.y, 2 * line.X[:, 0] + 1, atol=1e-6)


def test_examples_forms():
    rng = np.random.default_rng(1)
    one = Distribution("uniform_cube", dim=1)
    assert all(isinstance(z, float) for z in one.examples(one.draw(rng, 4)))
    two = Distribution("gaussian", dim=2)
    assert all(isinstance(z, tuple) and len(z) == 2 for z in two.examples(two.draw(rng, 4)))
    lab = Distribution("labeled_blobs", dim=2)
    x, y = lab.examples(lab.draw(rng, 1))[0]
    assert isinstance(x, tuple) and y in (-1.0, 1.0)


def test_continuous_laws_have_no_duplicates():
    rng = np.random.default_rng(2)
    for kind in ("gaussian", "uniform_cube"):
        d = Distribution(kind, dim=1)
        S = d.source(1000).sample(rng)
        assert len(S.distinct()) == 1000


def test_point_mass_duplicates():
    S = Distribution("point_mass", atom=0.0).source(20).sample(np.random.default_rng(3))
    assert S == Multiset([0.0] * 20)


@pytest.mark.parametrize("bad", [
    {"kind": "cauchy"},
    {"kind": "gaussian", "dim": 0},
    {"kind": "uniform_cube", "lo": 1.0, "hi": 1.0},
    {"kind": "gaussian", "var": -1.0},
    {"kind": "noisy_line", "noise": 0.0},
])
def test_distribution_validation(bad):
    with pytest.raises(ConfigError):
        Distribution(**bad)


# -------------------------------------------------------------- config

def test_parse_config_defaults():
    cfg = parse_config({"scheme": "hull2", "distribution": {"kind": "uniform_cube"},
                        "N": 10, "delta": 0.1, "trials": 1})
    assert cfg.n_test_risk == 100_000 and cfg.n_test_phi == 1000 and cfg.seed == 0
    assert cfg.scheme == {"name": "hull2"}


@pytest.mark.parametrize("patch, field", [
    ({"N": 0}, "N"),
    ({"N": 2.5}, "N"),
    ({"delta": 1.0}, "delta"),
    ({"delta": "x"}, "delta"),
    ({"trials": -1}, "trials"),
    ({"n_test_phi": 0}, "n_test_phi"),
    ({"scheme": "nosuch"}, "scheme.name"),
    ({"scheme": {"name": "svm", "rho": -1}}, "scheme"),
    ({"distribution": {"dim": 3}}, "distribution.kind"),
    ({"distribution": {"kind": "gaussian", "colour": 1}}, "distribution.colour"),
    ({"extra": 1}, "extra"),
])
def test_parse_config_names_field(patch, field):
    with pytest.raises(ConfigError) as e:
        parse_config({**BASE, **patch})
    assert str(e.value).startswith(field + ":")


def test_parse_config_missing():
    raw = dict(BASE)
    del raw["delta"]
    with pytest.raises(ConfigError, match="^delta:"):
        parse_config(raw)


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


def test_config_roundtrip(tmp_path):
    cfg = parse_config(BASE)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_config(p) == cfg


# ----------------------------------------------------------- estimators

def test_trial_seed_stable():
    assert trial_seed(0, 1) == trial_seed(0, 1)
    assert len({trial_seed(0, i) for i in range(100)}) == 100
    assert trial_seed(0, 1) != trial_seed(1, 0)


def test_binomial_slack():
    assert binomial_slack(0.0, 10) == 0.0
    assert binomial_slack(0.5, 100) == pytest.approx(0.15)


def test_risk_in_unit_interval():
    rng = np.random.default_rng(4)
    dist = Distribution("uniform_cube", dim=2)
    s = make_scheme("hull2")
    S = dist.source(200).sample(rng)
    r = estimate_risk(s, S, dist, 5000, rng)
    assert 0.0 < r < 0.2


def test_risk_constant_label_svm():
    rng = np.random.default_rng(5)
    dist = Distribution("labeled_blobs", dim=2)
    S = Multiset(((x, 1.0) for x, _ in dist.examples(dist.draw(rng, 20))))

    class AllPositive:
        def draw(self, rng, n):
            b = dist.draw(rng, n)
            return LabeledBatch(b.X, np.ones(n))

    assert estimate_risk(make_scheme("svm"), S, AllPositive(), 1000, rng) == 0.0


def _halfspace():
    return CompressionScheme(
        "halfspace", lambda U: Multiset(), learner=lambda U: 0.0,
        loss=lambda h, z: int(z[0] > h),
        batch_loss=lambda h, Z: (np.asarray(Z)[:, 0] > h).astype(np.int8))


def test_risk_unbiased_on_known_law():
    dist = Distribution("gaussian", dim=2)
    n = 2000
    hits = 0
    for seed in range(100):
        r = estimate_risk(_halfspace(), Multiset(), dist, n, np.random.default_rng(seed))
        hits += abs(r - 0.5) <= 4 / math.sqrt(n)
    assert hits >= 99


def test_risk_without_batch_loss():
    rng = np.random.default_rng(6)
    dist = Distribution("uniform_cube", dim=1)
    s = make_scheme("second_largest")
    S = Multiset([0.2, 0.5, 0.9])
    r = estimate_risk(s, S, dist, 20000, rng)
    assert r == pytest.approx(0.5, abs=0.02)


def test_phi_trimming_point_mass_is_zero():
    dist = Distribution("point_mass", atom=0.0)
    s = make_scheme("trimming", M=100)
    S = dist.source(500).sample(np.random.default_rng(7))
    assert estimate_phi(s, S, dist, 200, np.random.default_rng(8)) == 0.0


def test_phi_empty_sample_hull():
    dist = Distribution("gaussian", dim=2)
    assert estimate_phi(make_scheme("hull2"), Multiset(), dist, 50, np.random.default_rng(9)) == 1.0


def test_phi_close_to_risk_for_hull():
    rng = np.random.default_rng(10)
    dist = Distribution("gaussian", dim=2)
    s = make_scheme("hull2")
    S = dist.source(300).sample(rng)
    phi = estimate_phi(s, S, dist, 4000, rng)
    risk = estimate_risk(s, S, dist, 4000, rng)
    assert abs(phi - risk) <= 3 * math.sqrt(2 * 0.05 / 4000) + 0.01


# --------------------------------------------------------------- trials

def test_zero_trials():
    assert run_trials(parse_config({**BASE, "trials": 0})) == []


def test_trial_fields_consistent():
    cfg = parse_config(BASE)
    table = bound_table(cfg.N, cfg.delta)
    r = run_trial(cfg, 0, table)
    row = table.row(r.k)
    assert (r.eps, r.eps_low, r.eps_up) == (row.eps, row.eps_low, row.eps_up)
    assert 0 <= r.risk_hat <= 1 and 0 <= r.phi_hat <= 1
    slack = binomial_slack(r.risk_hat, cfg.n_test_risk)
    assert r.inside == (r.eps_low - slack <= r.risk_hat <= r.eps_up + slack)
    assert r.seed == trial_seed(cfg.seed, 0)


def test_trials_reproducible_and_parallel_identical():
    cfg = parse_config({**BASE, "trials": 6})
    a = run_trials(cfg)
    assert a == run_trials(cfg)
    assert trials_csv(a) == trials_csv(run_trials(cfg, jobs=3))
    assert [r.trial for r in a] == list(range(6))


def test_seed_changes_results():
    a = run_trials(parse_config({**BASE, "seed": 1}))
    b = run_trials(parse_config({**BASE, "seed": 2}))
    assert a != b


def test_learnerless_scheme_uses_phi():
    cfg = parse_config({"scheme": {"name": "trimming", "M": 100},
                        "distribution": {"kind": "point_mass"}, "N": 500, "delta": 1e-3,
                        "trials": 2, "n_test_phi": 50})
    res = run_trials(cfg)
    assert all(r.k == 100 and r.phi_hat == 0.0 and r.risk_hat == 0.0 for r in res)
    assert all(r.eps_low > 0 and not r.inside for r in res)
    assert coverage_report(res, cfg.delta)["coverage"] == 0.0


def test_failed_trial_flagged():
    def boom(U):
        raise RuntimeError("solver blew up")

    bad = CompressionScheme("boom", boom)
    cfg = parse_config(BASE)
    r = run_trial(cfg, 0, bound_table(cfg.N, cfg.delta), bad)
    assert r.failed and "solver blew up" in r.error
    good = run_trial(cfg, 1)
    rep = coverage_report([r, good], cfg.delta)
    assert rep["failed"] == 1 and rep["valid"] == 1
    assert rep["coverage"] == float(good.inside)
    assert trials_csv([r]).splitlines()[1].endswith(",failed")


def test_nonconverged_learner_fails_trial():
    cfg = parse_config({"scheme": "svm", "distribution": {"kind": "labeled_blobs"}, "N": 20,
                        "delta": 0.01, "trials": 1, "n_test_risk": 10, "n_test_phi": 10})
    base = make_scheme("svm")
    from compress_cert.schemes.svm import svm_train

    capped = CompressionScheme("svm", base.compress_fn, lambda S: svm_train(S, max_iter=1),
                               base.loss, None, base.batch_loss)
    r = run_trial(cfg, 0, scheme=capped)
    assert r.failed and "converge" in r.error


# -------------------------------------------------------------- reports

def _result(i, k, risk, inside):
    return TrialResult(i, i, k, risk, risk, 0.1, 0.0, 0.2, inside)


def test_coverage_all_inside():
    res = [_result(i, 5, 0.05, True) for i in range(4)]
    rep = coverage_report(res, 0.01, N=100)
    assert rep["coverage"] == 1.0 and rep["meets_target"]
    assert rep["mean_abs_risk_dev"] == pytest.approx(0.0)
    assert (rep["k_min"], rep["k_max"]) == (5, 5)


def test_coverage_partial():
    res = [_result(0, 5, 0.05, True), _result(1, 9, 0.5, False)]
    rep = coverage_report(res, 0.01, N=100)
    assert rep["coverage"] == 0.5 and not rep["meets_target"]
    assert rep["max_abs_risk_dev"] == pytest.approx(0.41)
    assert rep["risk_max"] == 0.5


def test_trials_csv_format():
    r = TrialResult(0, 123, 7, 1 / 3, 0.25, 0.1, 0.0, 0.2, True)
    text = trials_csv([r])
    assert text.endswith("\n")
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == TRIALS_HEADER
    assert rows[1] == ["0", "123", "7", "0.333333333333", "0.25", "0.1", "0", "0.2", "true"]


def test_trials_csv_empty():
    assert trials_csv([]) == ",".join(TRIALS_HEADER) + "\n"


def test_phi_consistency_trend():
    # k/N estimates phi better as N grows
    devs = []
    for N in (500, 2000):
        cfg = ExperimentConfig({"name": "hull2"}, Distribution("uniform_cube", dim=2), N, 1e-3,
                               trials=8, n_test_risk=1, n_test_phi=1500, seed=3)
        rep = coverage_report(run_trials(cfg), cfg.delta, N)
        devs.append(rep["mean_abs_phi_dev"])
    assert devs[0] > devs[1]
