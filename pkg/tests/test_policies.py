import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coachope.behavior import HeadPropensityModel
from coachope.core import ContractError, Level, ToolChoice
from coachope.features import FeatureVector, build_frame
from coachope.policies import (
    PolicyName,
    PolicySpec,
    Ratios,
    always_tool_from_log,
    clip_ratio,
    importance_ratios,
    policy_probs,
    standard_policies,
)

from .conftest import make_session, make_turn


def ctx(**kw):
    base = dict(turn_index=2, latency_seconds=10.0, response_chars=400, has_citation=False,
                has_structure=False, user_asked_explain=False, literacy_high=False,
                efficacy_high=True, prev_outcome=0)
    base.update(kw)
    return FeatureVector(**base)


def _mixed_log():
    tools = [ToolChoice.SEARCH] * 11 + [ToolChoice.CODE] * 8 + [ToolChoice.EMAIL] + [ToolChoice.NONE] * 10
    turns = [make_turn("a", t, tool=tool) for t, tool in enumerate(tools, start=1)]
    return [make_session("a", turns)]


def test_no_tool_never_calls_tools():
    for explain in (False, True):
        tool, style = policy_probs(PolicySpec(PolicyName.NO_TOOL), ctx(user_asked_explain=explain))
        assert tool.tolist() == [1, 0, 0, 0]
        assert style[1] == float(explain)


def test_always_tool_uses_logged_mix():
    spec = always_tool_from_log(_mixed_log())
    tool, _ = policy_probs(spec, ctx())
    np.testing.assert_allclose(tool, [0.0, 0.55, 0.40, 0.05])


def test_always_tool_needs_tool_turns():
    turns = [make_turn("a", t) for t in range(1, 4)]
    with pytest.raises(ContractError):
        always_tool_from_log([make_session("a", turns)])


def test_heuristic_explain_means_detailed():
    _, style = policy_probs(PolicySpec.named("heuristic"), ctx(user_asked_explain=True))
    assert style.tolist() == [0.0, 1.0]


def test_heuristic_gate():
    spec = PolicySpec(PolicyName.HEURISTIC_GATED)
    assert policy_probs(spec, ctx(turn_index=11))[0][0] == 1.0
    assert policy_probs(spec, ctx(prev_outcome=-1))[0][0] == 1.0
    tool, _ = policy_probs(spec, ctx(has_citation=True))
    assert tool.tolist() == [0, 1, 0, 0]
    tool, _ = policy_probs(spec, ctx(has_citation=False))
    assert tool.tolist() == [0, 0, 1, 0]


def test_personalized_shifts_by_literacy():
    spec = PolicySpec(PolicyName.PERSONALIZED_WEIGHTS, literacy_shift=0.2)
    low_gate_closed = policy_probs(spec, ctx(turn_index=12, literacy_high=False))[0]
    high_gate_closed = policy_probs(spec, ctx(turn_index=12, literacy_high=True))[0]
    low_gate_open = policy_probs(spec, ctx(literacy_high=False))[0]
    assert low_gate_closed[0] == 1.0
    assert high_gate_closed[0] == pytest.approx(0.8)
    assert low_gate_open[0] == pytest.approx(0.2)


@given(st.sampled_from(["notool", "heuristic", "personalized"]), st.integers(1, 20), st.booleans(),
       st.booleans(), st.booleans(), st.sampled_from([-1, 0, 1]))
def test_eval_probs_are_distributions(name, t, cite, explain, lit, prev):
    spec = PolicySpec.named(name)
    turns = [make_turn("a", i, citation=cite, explain=explain) for i in range(1, t + 1)]
    frame = build_frame([make_session("a", turns, literacy=Level.HIGH if lit else Level.LOW)])
    frame_probs = spec.eval_probs(frame)
    for p in frame_probs:
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_named_aliases_and_unknown():
    assert PolicySpec.named("HeuristicGated").name is PolicyName.HEURISTIC_GATED
    assert PolicySpec.named("always-tool").name is PolicyName.ALWAYS_TOOL
    with pytest.raises(ContractError):
        PolicySpec.named("random")


def test_config_round_trip(tmp_path):
    cfg = {"name": "custom", "label": "LitTools", "key": ["literacy"],
           "tool": {"high": [0.1, 0.5, 0.3, 0.1], "default": [1, 0, 0, 0]},
           "style": {"default": [0.5, 0.5]}}
    path = tmp_path / "policy.json"
    path.write_text(json.dumps(cfg))
    spec = PolicySpec.load(path)
    assert spec.display_name == "LitTools"
    tool, style = policy_probs(spec, ctx(literacy_high=True))
    assert tool.tolist() == [0.1, 0.5, 0.3, 0.1]
    assert policy_probs(spec, ctx())[0].tolist() == [1, 0, 0, 0]
    assert PolicySpec.from_config(spec.to_dict()) == spec


def test_custom_table_must_be_distribution():
    with pytest.raises(ContractError):
        PolicySpec.from_config({"name": "custom", "tool": {"default": [0.5, 0.6, 0, 0]},
                                "style": {"default": [1, 0]}})


def _one_turn_frame(tool=ToolChoice.SEARCH):
    return build_frame([make_session("a", [make_turn("a", 1, tool=tool)])])


def _behavior(tool_row, style_row):
    return (HeadPropensityModel.from_known("tool", np.array([tool_row])),
            HeadPropensityModel.from_known("style", np.array([style_row])))


def _custom(tool_row, style_row):
    return PolicySpec.from_config({"name": "custom", "tool": {"default": tool_row}, "style": {"default": style_row}})


def test_on_policy_ratio_is_one():
    row_t, row_s = [0.25, 0.25, 0.25, 0.25], [0.5, 0.5]
    r = importance_ratios(_custom(row_t, row_s), _behavior(row_t, row_s), _one_turn_frame())
    assert r.raw[0] == pytest.approx(1.0)


def test_hand_product_ratio():
    target = _custom([0.1, 0.8, 0.05, 0.05], [0.5, 0.5])
    behavior = _behavior([0.4, 0.2, 0.2, 0.2], [0.5, 0.5])
    r = importance_ratios(target, behavior, _one_turn_frame())
    assert r.raw[0] == pytest.approx(4.0)
    assert not r.clip_hit[0]


def test_propensity_below_floor_rejected():
    target = _custom([0.25] * 4, [0.5, 0.5])
    behavior = _behavior([0.997, 0.001, 0.001, 0.001], [0.5, 0.5])
    with pytest.raises(ContractError, match="below floor"):
        importance_ratios(target, behavior, _one_turn_frame())


def test_clip_example():
    r = clip_ratio(120.0, 50.0)
    assert (r.raw, r.clipped, r.clip_hit) == (120.0, 50.0, True)
    assert not clip_ratio(50.0, 50.0).clip_hit


def test_clip_must_be_positive():
    with pytest.raises(ContractError, match="clip must be > 0"):
        clip_ratio(1.0, 0.0)


@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=50), st.floats(0.5, 100))
def test_clipping_idempotent_and_bounded(raw, c):
    once = Ratios.from_raw(np.array(raw), c)
    twice = Ratios.from_raw(once.clipped, c)
    np.testing.assert_array_equal(once.clipped, twice.clipped)
    assert np.all(once.clipped <= c)
    assert not twice.clip_hit.any()


def test_standard_policies_names(pilot_log):
    names = [p.display_name for p in standard_policies(pilot_log.sessions)]
    assert names == ["NoTool", "AlwaysTool", "HeuristicGated", "PersonalizedWeights"]


def test_no_tool_zero_weight_on_tool_turns():
    frame = _one_turn_frame(ToolChoice.CODE)
    behavior = _behavior([0.25] * 4, [0.5, 0.5])
    r = importance_ratios(PolicySpec(PolicyName.NO_TOOL), behavior, frame)
    assert r.raw[0] == 0.0
