import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coachope.core import ContractError, EstimationError
from coachope.features import build_frame
from coachope.ope import (
    ESTIMANDS,
    BootstrapWarning,
    PolicyEval,
    aipw,
    bootstrap_ci,
    diagnostics,
    effective_sample_size,
    fit_context,
    session_bootstrap,
    slice_by_archetype,
    snips,
    zscore_ratings,
)
from coachope.policies import BehaviorPolicy, PolicySpec, Ratios

from .conftest import make_session, make_turn


def test_snips_examples():
    assert snips(np.ones(4), [1, 0, -1, 1]) == pytest.approx(0.25)
    assert snips([2.0, 0.0], [0.5, 9.9]) == pytest.approx(0.5)


def test_snips_all_zero_weights_fails():
    with pytest.raises(EstimationError):
        snips(np.zeros(3), [1, 2, 3])


weights = st.lists(st.floats(0.0, 50.0, allow_nan=False), min_size=1, max_size=40)


@given(weights, st.floats(0.01, 100.0), st.data())
def test_snips_scale_invariant_and_bounded(w, scale, data):
    w = np.asarray(w)
    if w.sum() <= 0:
        return
    r = np.asarray(data.draw(st.lists(st.floats(-5, 5), min_size=len(w), max_size=len(w))))
    v = snips(w, r)
    assert v == pytest.approx(snips(w * scale, r), rel=1e-9, abs=1e-9)
    support = r[w > 0]
    assert support.min() - 1e-9 <= v <= support.max() + 1e-9


def test_aipw_unrated_is_direct_method():
    q_pi = np.array([0.2, -0.4, 1.0])
    out = aipw(q_pi, np.zeros(3), np.full(3, np.nan), np.zeros(3, bool), np.full(3, 0.5), np.ones(3))
    assert out.value == pytest.approx(q_pi.mean())


@given(st.lists(st.tuples(st.floats(0, 20), st.floats(-3, 3)), min_size=1, max_size=30))
def test_aipw_reduces_to_plain_ips(rows):
    w = np.array([a for a, _ in rows])
    r = np.array([b for _, b in rows])
    n = len(w)
    out = aipw(np.zeros(n), np.zeros(n), r, np.ones(n, bool), np.ones(n), w)
    assert out.value == pytest.approx((w * r).mean(), abs=1e-9)


def test_aipw_rate_floor_counted():
    out = aipw(np.zeros(2), np.zeros(2), np.array([1.0, 1.0]), np.ones(2, bool), np.array([0.001, 1.0]), np.ones(2))
    assert out.rate_floor_hits == 1
    assert out.value == pytest.approx((1 / 0.01 + 1) / 2)


def _pe(n, w=None, r_user=-1.0, r_tool=1.0, r_eng=0.0, weights=(0.6, 0.2, 0.2), archetype=0):
    ones = np.ones(n)
    return PolicyEval(
        w=ones if w is None else np.asarray(w, float), raw=ones, clip_hit=np.zeros(n, bool),
        q_pi=ones * r_user, q_a=ones * r_user, r_user=ones * r_user, rated=np.ones(n, bool),
        p_rate=ones, r_tool=ones * r_tool, r_eng=ones * r_eng,
        weights=np.tile(weights, (n, 1)), archetype=np.full(n, archetype),
    )


def test_total_composition_example():
    assert _pe(6).r_total() == pytest.approx(-0.4)
    assert _pe(6, weights=(0.0, 0.0, 0.0)).r_total() == 0.0


def test_target_equals_behavior_snips_is_mean(pilot_log):
    ctx = fit_context(pilot_log.sessions, seed=0)
    target = BehaviorPolicy(ctx.tool_model, ctx.style_model)
    pe = ctx.policy_eval(target)
    np.testing.assert_allclose(pe.w, 1.0)
    r = ctx.frame.r_tool + ctx.frame.r_eng
    assert abs(pe.r_obj() - r.mean()) <= 1e-9


@pytest.mark.filterwarnings("ignore::coachope.behavior.DegenerateModelWarning")
def test_aipw_oracle_on_policy_fully_rated_equals_mean():
    log = _fully_rated_log()
    frame = build_frame(log)
    ctx = fit_context(frame, n_folds=2, user_reward="raw")
    target = BehaviorPolicy(ctx.tool_model, ctx.style_model)
    pe = ctx.policy_eval(target)
    pe.q_pi = pe.q_a = np.zeros(len(pe))
    pe.p_rate = np.ones(len(pe))
    assert abs(pe.r_user_aipw() - frame.rating.mean()) <= 1e-9


def _fully_rated_log():
    from coachope.core import ToolChoice

    out = []
    for k in range(6):
        turns = [make_turn(f"s{k}", t, tool=ToolChoice.SEARCH if t % 2 else ToolChoice.NONE,
                           rating=1 + (k + t) % 5, citation=bool(t % 3)) for t in range(1, 7)]
        out.append(make_session(f"s{k}", turns))
    return out


def test_zscore_flags_sparse_users():
    turns = [make_turn("a", 1, rating=3), make_turn("a", 2, rating=None)]
    frame = build_frame([make_session("a", turns, user_id="solo")] + _fully_rated_log())
    z, flagged = zscore_ratings(frame)
    assert flagged == ["solo"]
    assert z[0] == 0.0 and np.isnan(z[1])


def test_bootstrap_zero_width_on_identical_units():
    res = bootstrap_ci([3.0] * 20, lambda xs: float(np.mean(xs)), n_boot=200)
    assert res.width == 0.0
    assert res.low == 3.0


def test_bootstrap_needs_100_replicates():
    with pytest.raises(ContractError):
        bootstrap_ci([1.0, 2.0], np.mean, n_boot=50)


def test_bootstrap_warns_on_frequent_failures():
    units = [0.0] * 9 + [1.0]

    def est(xs):
        if sum(xs) == 0:
            raise EstimationError("undefined")
        return float(np.mean(xs))

    with pytest.warns(BootstrapWarning):
        res = bootstrap_ci(units, est, n_boot=200, seed=1)
    assert res.n_failed > 40


def test_bootstrap_deterministic_and_worker_invariant():
    units = list(np.random.default_rng(0).normal(size=40))
    a = bootstrap_ci(units, np.mean, n_boot=300, seed=7)
    b = bootstrap_ci(units, np.mean, n_boot=300, seed=7, workers=3)
    assert (a.low, a.high) == (b.low, b.high)


def test_bootstrap_interval_contains_mean_of_normal_data():
    units = list(np.random.default_rng(1).normal(2.0, 1.0, size=200))
    res = bootstrap_ci(units, lambda xs: float(np.mean(xs)), n_boot=400, seed=3)
    assert res.low < np.mean(units) < res.high
    assert res.width == pytest.approx(2 * 1.96 / np.sqrt(200), rel=0.25)


def test_session_bootstrap_on_point_mass():
    pe = _pe(12)
    session = np.repeat(np.arange(4), 3)
    res = session_bootstrap(pe, session, ESTIMANDS["total"], n_boot=100)
    assert res.low == pytest.approx(-0.4) and res.high == pytest.approx(-0.4)


def test_slice_identical_policies_zero():
    pe = _pe(8, r_user=0.3, r_tool=0.5)
    pe.archetype = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    for row in slice_by_archetype(pe, pe):
        assert row.delta_objective == 0.0 and row.delta_satisfaction == 0.0


def test_slice_marks_absent_archetypes():
    pe = _pe(4, archetype=2)
    rows = slice_by_archetype(pe, pe)
    assert [r.present for r in rows] == [False, False, True, False]


def test_ess_examples():
    assert effective_sample_size(np.ones(350)) == pytest.approx(350)
    w = np.zeros(10)
    w[3] = 1.0
    assert effective_sample_size(w) == pytest.approx(1.0)


def test_diagnostics_clipping_rate():
    raw = np.ones(350)
    raw[17] = 120.0
    block = diagnostics(Ratios.from_raw(raw, 50.0), np.ones(350, bool))
    assert block.n_clipped == 1
    assert block.clipping_rate == pytest.approx(1 / 350)
    assert block.max_raw_ratio == 120.0


def test_fitted_context_on_pilot_like(pilot_log):
    ctx = fit_context(pilot_log.sessions, seed=0)
    assert 0.5 < ctx.rating_model.auc < 0.95
    pe = ctx.policy_eval(PolicySpec.named("notool"))
    assert np.isfinite(pe.r_total())
