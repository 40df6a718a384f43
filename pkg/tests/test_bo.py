import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from lapbo.benchmarks import BRANIN_MIN, ScalarObjective, branin, branin_on_box, sphere
from lapbo.bo import (
    MAX_COST,
    EvaluationRecord,
    HedgeState,
    SearchConfig,
    acq_ei,
    acq_lcb,
    acq_pi,
    best_so_far,
    bo_search,
    hedge_update,
    normalized_hedge_costs,
    propose_portfolio,
    random_search,
    read_trace,
)
from lapbo.gp import gp_fit


def mc_oracle(mean, std, best, xi, n=10_000_000, seed=0):
    g = np.random.default_rng(seed).normal(mean, std, size=n)
    return np.maximum(best - xi - g, 0.0).mean(), (g < best - xi).mean()


def test_ei_pi_against_monte_carlo():
    ei_mc, pi_mc = mc_oracle(2.0, 0.7, 1.5, 0.01)
    assert abs(acq_ei(2.0, 0.7, 1.5, 0.01) - ei_mc) < 1e-3
    assert abs(acq_pi(2.0, 0.7, 1.5, 0.01) - pi_mc) < 1e-3


def test_acquisition_closed_forms():
    assert acq_ei(1.0, 0.0, 1.0, 0.01) == 0.0
    assert acq_ei(1.0 - 0.01, 1.0, 1.0, 0.01) == pytest.approx(norm.pdf(0.0), abs=1e-15)
    assert acq_ei(0.5, 0.0, 1.0, 0.0) == 0.5
    assert acq_lcb(1.0, 2.0, 2.0) == -3.0
    assert acq_lcb(1.7, 0.0, 2.0) == 1.7
    assert acq_lcb(1.7, 5.0, 0.0) == 1.7
    assert acq_pi(1.0 - 0.01, 0.3, 1.0, 0.01) == 0.5
    assert acq_pi(100.0, 0.0, 1.0, 0.01) == 0.0
    assert acq_pi(0.0, 0.0, 1.0, 0.01) == 1.0


@settings(max_examples=200, deadline=None)
@given(mean=st.floats(-50, 50), std=st.floats(0, 20), best=st.floats(-50, 50),
       xi=st.floats(0, 1), kappa=st.floats(1e-3, 5))
def test_acquisition_ranges(mean, std, best, xi, kappa):
    assert acq_ei(mean, std, best, xi) >= 0.0
    assert 0.0 <= acq_pi(mean, std, best, xi) <= 1.0
    assert acq_lcb(mean, std, kappa) <= mean


def test_acquisitions_vectorised():
    m = np.array([0.0, 1.0, 2.0])
    s = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(acq_ei(m, s, 1.0), [acq_ei(a, b, 1.0) for a, b in zip(m, s)])
    np.testing.assert_allclose(acq_pi(m, s, 1.0), [acq_pi(a, b, 1.0) for a, b in zip(m, s)])


def test_hedge_update_arithmetic():
    s = hedge_update(HedgeState(beta=0.5), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(s.probabilities, [0.2, 0.4, 0.4], rtol=1e-15)


@settings(max_examples=100, deadline=None)
@given(c=st.lists(st.floats(0, 1), min_size=3, max_size=3), beta=st.floats(0, 1))
def test_hedge_properties(c, beta):
    s = hedge_update(HedgeState(beta=beta), c)
    assert abs(s.probabilities.sum() - 1.0) < 1e-12
    assert all(w > 0 for w in s.weights)
    same = hedge_update(HedgeState((0.2, 0.5, 0.3), beta), [c[0]] * 3)
    np.testing.assert_allclose(same.probabilities, [0.2, 0.5, 0.3], rtol=1e-12)
    flat = hedge_update(HedgeState(beta=1.0), c)
    np.testing.assert_allclose(flat.probabilities, [1 / 3] * 3, rtol=1e-15)


def test_hedge_invalid():
    with pytest.raises(ValueError):
        HedgeState(beta=1.5)
    with pytest.raises(ValueError):
        HedgeState((1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        hedge_update(HedgeState(), [0.0, np.nan, 1.0])


def test_normalized_costs():
    np.testing.assert_allclose(normalized_hedge_costs([3.0, 1.0, 2.0]), [1.0, 0.0, 0.5])
    np.testing.assert_array_equal(normalized_hedge_costs([2.0, 2.0, 2.0]), [0.0, 0.0, 0.0])


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(bounds=((1.0, 0.0),))
    with pytest.raises(ValueError):
        SearchConfig(n_init=0)
    with pytest.raises(ValueError):
        SearchConfig(candidate_count=0)
    cfg = SearchConfig(seed=4)
    assert cfg.eval_seed == 4
    assert SearchConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def sphere_model(center, n=10, seed=0):
    cfg = SearchConfig()
    rng = np.random.default_rng(seed)
    X = cfg.lower + rng.random((n, 2)) * (cfg.upper - cfg.lower)
    f = sphere(center)
    return gp_fit(X, [f(x) for x in X]), cfg


def test_portfolio_degenerate_weights_pick_ei():
    model, cfg = sphere_model([2.0, 1.0])
    hedge = HedgeState((1.0, 1e-300, 1e-300))
    for s in range(10):
        p = propose_portfolio(model, hedge, cfg, np.random.default_rng(s))
        assert p.acquisition == "EI"
        np.testing.assert_array_equal(p.chosen, p.proposals[0])


def test_portfolio_deterministic():
    model, cfg = sphere_model([2.0, 1.0])
    a = propose_portfolio(model, HedgeState(), cfg, np.random.default_rng(3))
    b = propose_portfolio(model, HedgeState(), cfg, np.random.default_rng(3))
    np.testing.assert_array_equal(a.chosen, b.chosen)
    assert a.chosen_index == b.chosen_index


@pytest.mark.parametrize("center", [(1.5, -2.5), (6.5, 2.5), (2.0, 3.0)])
def test_portfolio_proposals_near_sphere_minimum(center):
    model, cfg = sphere_model(center)
    f = sphere(center)
    mid = (cfg.lower + cfg.upper) / 2
    box_median = np.median([f(x) for x in cfg.lower + np.random.default_rng(1).random((4096, 2))
                            * (cfg.upper - cfg.lower)])
    p = propose_portfolio(model, HedgeState(), cfg, np.random.default_rng(0))
    for x in p.proposals:
        # same half-box as the centre along every axis, and better than the box median
        assert np.all((x >= mid) == (np.asarray(center) >= mid))
        assert f(x) < box_median


def test_random_search_uniformity():
    cfg = SearchConfig(budget=10_000, seed=5)
    recs = random_search(lambda p, s: _const(), cfg)
    pts = np.array([r.point for r in recs])
    mid = (cfg.lower + cfg.upper) / 2
    assert np.all(np.abs(pts.mean(axis=0) - mid) < 0.02 * (cfg.upper - cfg.lower))
    assert np.all(pts >= cfg.lower) and np.all(pts <= cfg.upper)


def _const(v=1.0):
    from lapbo.metrics import ScoreReport
    return ScoreReport(100.0, 0.0, v, v)


def test_random_search_single_and_repeatable():
    cfg = SearchConfig(budget=1, seed=2)
    a = random_search(lambda p, s: _const(), cfg)
    b = random_search(lambda p, s: _const(), cfg)
    assert len(a) == 1 and a == b
    assert a[0].chosen_acquisition == "RANDOM"


def test_budget_equal_n_init_never_fits(monkeypatch):
    import lapbo.bo as bo

    def boom(*a, **k):
        raise AssertionError("GP fitted")

    monkeypatch.setattr(bo, "gp_fit", boom)
    recs = bo_search(lambda p, s: _const(), SearchConfig(budget=5, n_init=5))
    assert [r.chosen_acquisition for r in recs] == ["INIT"] * 5
    with pytest.raises(ValueError):
        bo_search(lambda p, s: _const(), SearchConfig(budget=4, n_init=5))


def test_bo_points_in_bounds_and_incumbent_monotone():
    cfg = SearchConfig(bounds=((0, 8), (-4, 4), (0, 8), (-4, 4)), budget=20, seed=1)
    recs = bo_search(ScalarObjective(sphere([1, 1, 5, -3]), 0.1), cfg)
    pts = np.array([r.point for r in recs])
    assert np.all(pts >= cfg.lower) and np.all(pts <= cfg.upper)
    inc = best_so_far(recs)
    assert np.all(np.diff(inc) <= 0)
    for r in recs:
        assert r.cost == (100.0 - r.accuracy_pct) + r.ece_pct
        assert r.eval_seed == cfg.eval_seed


def test_bo_hedge_beta_one_stays_uniform():
    cfg = SearchConfig(budget=20, beta=1.0, seed=3)
    recs = bo_search(ScalarObjective(branin_on_box(SearchConfig().bounds), 0.1), cfg)
    for r in recs[cfg.n_init:]:
        assert r.hedge_probs == (1 / 3, 1 / 3, 1 / 3)


def test_traces_are_bit_identical(tmp_path):
    cfg = SearchConfig(budget=15, seed=7)
    obj = ScalarObjective(branin_on_box(cfg.bounds), 0.1)
    for name, fn in (("bo", bo_search), ("rs", random_search)):
        fn(obj, cfg, tmp_path / f"{name}1.jsonl")
        fn(obj, cfg, tmp_path / f"{name}2.jsonl")
        assert (tmp_path / f"{name}1.jsonl").read_bytes() == (tmp_path / f"{name}2.jsonl").read_bytes()


def test_trace_round_trip(tmp_path):
    cfg = SearchConfig(budget=8, seed=1)
    recs = bo_search(ScalarObjective(sphere([3, 0])), cfg, tmp_path / "t.jsonl", meta={"tag": "x"})
    header, back = read_trace(tmp_path / "t.jsonl")
    assert header["method"] == "bo" and header["meta"] == {"tag": "x"}
    assert SearchConfig.from_dict(header["config"]) == cfg
    assert back == recs


def test_read_trace_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps({"kind": "header", "format_version": 99}) + "\n")
    with pytest.raises(ValueError):
        read_trace(p)


def test_objective_failure_gets_penalty(tmp_path):
    calls = []

    def flaky(p, s):
        calls.append(p)
        if len(calls) in (1, 4):
            raise RuntimeError("boom")
        return _const(float(len(calls)))

    recs = random_search(flaky, SearchConfig(budget=6), tmp_path / "f.jsonl")
    assert [r.status for r in recs] == ["failed", "ok", "ok", "failed", "ok", "ok"]
    assert recs[0].cost == MAX_COST
    assert recs[3].cost == 3.0  # worst ok cost so far
    assert np.isnan(recs[0].accuracy_pct)
    _, back = read_trace(tmp_path / "f.jsonl")
    assert back[3].status == "failed" and back[3].cost == 3.0
    # failures inside BO do not stop the loop either
    calls.clear()
    assert len(bo_search(flaky, SearchConfig(budget=8, n_init=3))) == 8


def test_record_json_schema():
    r = EvaluationRecord(2, (1.0, 2.0), "EI", 99.0, 0.5, 1.5, 0, "ok", (0.2, 0.4, 0.4))
    d = json.loads(r.to_json())
    assert d["kind"] == "evaluation"
    assert EvaluationRecord.from_dict(d) == r


def test_branin_values():
    for x in [(-np.pi, 12.275), (np.pi, 2.275), (9.42478, 2.475)]:
        assert branin(*x) == pytest.approx(BRANIN_MIN, abs=1e-5)
    f = branin_on_box(((0, 8), (-4, 4)))
    assert f(np.array([0.0, -4.0])) == pytest.approx(branin(-5.0, 0.0))


def test_branin_bo_beats_random_median_after_15():
    bounds = SearchConfig().bounds
    obj = ScalarObjective(branin_on_box(bounds), 0.1)
    bo_curves, rs_curves = [], []
    for seed in range(20):
        cfg = SearchConfig(budget=30, seed=seed)
        bo_curves.append(best_so_far(bo_search(obj, cfg)))
        rs_curves.append(best_so_far(random_search(obj, cfg)))
    bo_med = np.median(bo_curves, axis=0)
    rs_med = np.median(rs_curves, axis=0)
    assert np.all(bo_med[14:] < rs_med[14:])
