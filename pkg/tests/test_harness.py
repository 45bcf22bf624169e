import json
import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

import ldpwave
from ldpwave import (
    Ball,
    LdpReport,
    QuasipotentialMatrix,
    State,
    attractor_bound_check,
    emit,
    find_equilibria,
    ldp_verify,
    stochastic_stability_check,
    tightness_check,
    transition_vs_vtilde,
)
from ldpwave.cli import EXIT_ERROR, EXIT_OK, main
from ldpwave.harness import Sampling, _trend_verdict, slope_fit, slope_verdict


@pytest.fixture(scope="module")
def linear_cfg():
    cfg = ldpwave.example_experiment("linear")
    return replace(cfg, probes=(), sampling=Sampling(dt=0.1, burn_in=10.0, t_total=2000.0, n_batches=10))


@pytest.fixture(scope="module")
def linear_eq(linear_cfg):
    return find_equilibria(linear_cfg.model)


def report(rows=(), summary=()) -> LdpReport:
    return LdpReport("demo", ("ball", "eps", "mu"), rows, summary, {"seed": 1})


def test_slope_fit_exact():
    eps = np.array([0.4, 0.3, 0.2, 0.15])
    mu = 0.7 * np.exp(-0.5 / eps)
    fit = slope_fit(eps, mu)
    assert fit["estimate"] == pytest.approx(0.5)
    assert fit["intercept"] == pytest.approx(math.log(0.7))
    assert fit["ci"] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize(
    ("eps", "mu"),
    [([0.4, 0.3], [0.1, 0.05]), ([0.4, 0.3, 0.2], [0.1, 0.05, 0.0])],
    ids=["too_few", "zero_mu"],
)
def test_slope_fit_nan(eps, mu):
    assert math.isnan(slope_fit(eps, mu)["estimate"])


@pytest.mark.parametrize(
    ("estimate", "ci", "rate", "expected"),
    [
        (0.52, 0.01, 0.5, "consistent"),
        (0.62, 0.05, 0.5, "consistent"),
        (1.0, 0.01, 0.5, "inconsistent"),
        (0.1, 0.01, 0.5, "inconsistent"),
        (math.nan, math.nan, 0.5, "inconclusive"),
        (0.5, 0.01, math.inf, "inconclusive"),
        (0.5, 3.0, 0.5, "inconclusive"),
    ],
)
def test_slope_verdict(estimate, ci, rate, expected):
    assert slope_verdict(estimate, ci, rate) == expected


def test_trend_verdict():
    eps = [0.4, 0.3, 0.2, 0.15]
    assert _trend_verdict(eps, [-0.4, -0.3, -0.2, -0.1])[0] == "consistent"
    assert _trend_verdict(eps, [-0.1, -0.2, -0.3, -0.4])[0] == "inconsistent"
    assert _trend_verdict(eps, [0.0, 0.0, 0.0, 0.0]) == ("consistent", 0.0)
    assert _trend_verdict(eps, [-0.1, -math.inf, -0.3, -0.4])[0] == "inconclusive"
    assert _trend_verdict(eps[:2], [-0.2, -0.1])[0] == "inconclusive"


def test_report_verdict():
    assert report().verdict == "consistent"
    assert report(summary=[{"verdict": "consistent"}, {"verdict": "inconclusive"}]).verdict == "inconclusive"
    r = report(summary=[{"verdict": "inconclusive"}, {"verdict": "inconsistent"}])
    assert r.verdict == "inconsistent"
    assert r.inconclusive


def test_report_dict():
    r = report(rows=[{"ball": 0, "eps": 0.1, "mu": math.nan}], summary=[{"rate": math.inf, "verdict": "consistent"}])
    data = r.to_dict()
    assert data["rows"][0]["mu"] is None
    assert data["summary"][0]["rate"] == "inf"
    assert json.loads(json.dumps(data)) == data
    assert LdpReport.from_dict(data).summary[0]["rate"] == math.inf


def test_emit(tmp_path):
    rows = [{"ball": 0, "eps": e, "mu": 0.1 * e} for e in (0.3, 0.2)]
    written = emit(report(rows, [{"verdict": "consistent"}]), tmp_path / "out")
    assert [p.name for p in written] == ["demo.csv", "demo.json"]
    df = pd.read_csv(written[0])
    assert list(df.columns) == ["ball", "eps", "mu"]
    assert len(df) == 2
    with open(written[1]) as f:
        assert json.load(f)["verdict"] == "consistent"


def test_emit_empty(tmp_path):
    (path,) = emit(report(), tmp_path, formats=["csv"])
    with open(path) as f:
        assert f.read().strip() == "ball,eps,mu"


def test_emit_nok(tmp_path):
    with pytest.raises(ValueError):
        emit(report(), tmp_path, formats=["xlsx"])
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit(report(), blocker / "sub")


def test_ldp_verify_linear(linear_cfg, linear_eq):
    r = ldp_verify(linear_cfg, V=QuasipotentialMatrix([[0.0]]), eq=linear_eq)
    assert r.kind == "ldp_verify"
    assert len(r.rows) == len(linear_cfg.eps_schedule)
    assert r.summary[0]["rate"] == 0
    assert r.summary[0]["verdict"] in ("consistent", "inconsistent", "inconclusive")
    assert [row["eps"] for row in r.rows] == list(linear_cfg.eps_schedule)
    assert all(0 < row["mu"] < 1 for row in r.rows)
    with pytest.raises(ValueError):
        ldp_verify(linear_cfg, V=QuasipotentialMatrix(np.zeros((2, 2))), eq=linear_eq)


def test_ldp_verify_reproducible(linear_cfg, linear_eq):
    V = QuasipotentialMatrix([[0.0]])
    r1 = ldp_verify(linear_cfg, V=V, eq=linear_eq)
    r2 = ldp_verify(replace(linear_cfg, n_workers=2), V=V, eq=linear_eq)
    assert [row["mu"] for row in r1.rows] == [row["mu"] for row in r2.rows]


def test_ldp_verify_max_half_width(linear_cfg, linear_eq):
    V = QuasipotentialMatrix([[0.0]])
    loose = ldp_verify(linear_cfg, V=V, eq=linear_eq)
    strict_cfg = replace(linear_cfg, sampling=replace(linear_cfg.sampling, max_half_width=1e-9))
    strict = ldp_verify(strict_cfg, V=V, eq=linear_eq)
    assert not any(row["insufficient"] for row in loose.rows)
    assert all(row["insufficient"] for row in strict.rows)
    assert [row["mu"] for row in strict.rows] == [row["mu"] for row in loose.rows]


def test_emitted_files_reproducible(tmp_path, linear_cfg, linear_eq):
    V = QuasipotentialMatrix([[0.0]])
    for name in ("run1", "run2"):
        emit(ldp_verify(linear_cfg, V=V, eq=linear_eq), tmp_path / name)
    for filename in ("ldp_verify.csv", "ldp_verify.json"):
        assert (tmp_path / "run1" / filename).read_bytes() == (tmp_path / "run2" / filename).read_bytes()


def test_stochastic_stability(linear_cfg, linear_eq):
    far = Ball(State.at_rest([30.0]), 0.1)
    r = stochastic_stability_check(linear_cfg, eta=1.0, balls=[far], eq=linear_eq)
    assert len(r.rows) == 2 * len(linear_cfg.eps_schedule)
    assert r.summary[1]["verdict"] == "inconclusive"  # never visited
    assert all(row["eps_log_mu"] <= 0 for row in r.rows)


def test_tightness(linear_cfg):
    r = tightness_check(linear_cfg, radii=[1.0, 2.0])
    assert len(r.rows) == 2 * len(linear_cfg.eps_schedule)
    assert r.verdict == "consistent"


def test_attractor_bound_nok(linear_cfg, linear_eq):
    with pytest.raises(ValueError):
        attractor_bound_check(linear_cfg, [Ball(State.at_rest([0.05]), 0.1)], eq=linear_eq)
    with pytest.raises(ValueError):
        attractor_bound_check(linear_cfg, [Ball(State.at_rest([1.0]), 0.1, complement=True)], eq=linear_eq)


def test_transition_nok(linear_cfg, linear_eq):
    with pytest.raises(ValueError):
        transition_vs_vtilde(linear_cfg, [(0, 0)], V_tilde=QuasipotentialMatrix([[0.0]]), eq=linear_eq)
    with pytest.raises(ValueError):
        transition_vs_vtilde(linear_cfg, [(0, 1)], V_tilde=QuasipotentialMatrix([[0.0]]), eq=linear_eq)


def test_with_eps(linear_cfg):
    assert linear_cfg.with_eps([0.5, 0.25]).eps_schedule == (0.5, 0.25)
    with pytest.raises(ValueError):
        linear_cfg.with_eps([0.25, 0.5])


def test_cli_wgraph(tmp_path):
    matrix = tmp_path / "V.json"
    QuasipotentialMatrix([[0.0, 1.0, 4.0], [2.0, 0.0, 1.0], [5.0, 3.0, 0.0]]).to_file(matrix)
    out = tmp_path / "out"
    assert main(["wgraph", str(matrix), "--out", str(out), "--stable", "0", "2"]) == EXIT_OK
    df = pd.read_csv(out / "wgraph.csv")
    assert df["W"].tolist() == [5.0, 6.0, 2.0]
    with open(out / "wgraph.json") as f:
        assert json.load(f)["rate"] == [3.0, 3.0, 0.0]


def test_cli_equilibria(tmp_path):
    config = tmp_path / "experiment.yaml"
    ldpwave.example_experiment_to_file(config, "linear")
    assert main(["equilibria", str(config), "--out", str(tmp_path / "out")]) == EXIT_OK
    with open(tmp_path / "out" / "equilibria.json") as f:
        assert len(json.load(f)["equilibria"]) == 1


def test_cli_simulate(tmp_path):
    config = tmp_path / "experiment.yaml"
    ldpwave.example_experiment_to_file(config, "linear")
    args = ["simulate", str(config), "--out", str(tmp_path), "--eps", "0.1", "--T", "10", "--seed", "3"]
    assert main(args) == EXIT_OK
    df = pd.read_csv(tmp_path / "trajectory.csv")
    assert list(df.columns) == ["t", "a_1", "v_1"]
    assert df["t"].iloc[-1] == pytest.approx(10.0)


def test_cli_error(tmp_path):
    assert main(["equilibria", str(tmp_path / "missing.yaml")]) == EXIT_ERROR
    with pytest.raises(SystemExit):
        main(["chain", "config.yaml", "--pairs", "0-1"])
