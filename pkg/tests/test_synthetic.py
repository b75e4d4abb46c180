import json

import numpy as np
import pytest

from coachope.core import ARCHETYPES, Level, serialize_log, validate_sessions
from coachope.features import build_frame
from coachope.policies import PolicySpec
from coachope.simulator.synthetic import (
    PRESETS,
    SyntheticSpec,
    analytic_value,
    default_spec,
    generate_synthetic_bandit_log,
    named_policies,
    pilot_like_spec,
    resolve_spec,
    uniform_spec,
)


def _mc_value(spec, policy, n_sessions=6000, seed=17):
    """Monte-Carlo policy value: logged contexts, freshly sampled target actions and outcomes."""
    log = generate_synthetic_bandit_log(
        SyntheticSpec.from_dict({**spec.to_dict(), "n_sessions": n_sessions}), seed, policies=[]
    )
    f = build_frame(log.sessions)
    rng = np.random.default_rng(seed)
    n = len(f)
    tool_p, style_p = policy.eval_probs(f)
    tool = (rng.random(n)[:, None] > np.cumsum(tool_p, axis=1)[:, :-1]).sum(axis=1)
    style = (rng.random(n) < style_p[:, 1]).astype(int)

    arch = f.archetype
    success = np.asarray(spec.tool_success)
    p_ok = np.where(tool > 0, success[arch, np.maximum(tool, 1) - 1], 0.0)
    ok = rng.random(n) < p_ok
    r_tool = np.where(tool == 0, 0.0, np.where(ok, 1.0, -1.0))
    lat = -0.2 * np.minimum(f.latency / 30.0, 1.5)
    r_eng = np.clip(lat + 0.2 * f.has_structure + 0.2 * (f.has_citation & (tool == 1)), -0.5, 0.5)

    eff_high = np.array([a.efficacy is Level.HIGH for a in ARCHETYPES])[arch]
    mu = (spec.rating_base
          + np.asarray(spec.rating_tool_effect)[arch] * (tool > 0)
          + np.asarray(spec.rating_detailed_effect)[arch] * (style == 1)
          + spec.rating_explain_detailed * f.asked_explain * (style == 1)
          + spec.rating_failure * ((tool > 0) & ~ok)
          + spec.rating_turn_slope * (f.turn_index - 1)
          + spec.rating_efficacy_high * eff_high)
    rating = np.clip(mu, 1, 5)
    return float((r_tool + r_eng).mean()), float(rating.mean())


@pytest.mark.parametrize("k", range(4))
def test_analytic_value_matches_monte_carlo(k):
    spec = default_spec()
    policy = named_policies(spec)[k]
    truth = analytic_value(spec, policy)
    mc_obj, mc_user = _mc_value(spec, policy)
    assert truth.r_obj == pytest.approx(mc_obj, abs=0.02)
    assert truth.r_user == pytest.approx(mc_user, abs=0.02)


def test_uniform_spec_closed_form():
    spec = uniform_spec()
    probs = [0.1, 0.2, 0.3, 0.4]
    policy = PolicySpec.from_config({"name": "custom", "tool": {"default": probs}, "style": {"default": [0.5, 0.5]}})
    truth = analytic_value(spec, policy)
    # per-tool mean r_tool is 2p-1; engagement is the constant latency penalty at 30s
    p_ok = np.array([1.0, 0.8, 0.6, 0.9])
    r_tool = np.array([0.0, *(2 * p_ok[1:] - 1)])
    rating = spec.rating_base + spec.rating_failure * (1 - p_ok)
    assert truth.r_obj == pytest.approx(float(np.dot(probs, r_tool)) - 0.2, abs=1e-12)
    assert truth.r_user == pytest.approx(float(np.dot(probs, rating)), abs=1e-12)


def test_same_seed_same_bytes():
    a = generate_synthetic_bandit_log(pilot_like_spec(), 5, policies=[])
    b = generate_synthetic_bandit_log(pilot_like_spec(), 5, policies=[])
    c = generate_synthetic_bandit_log(pilot_like_spec(), 6, policies=[])
    assert serialize_log(a.sessions) == serialize_log(b.sessions)
    assert serialize_log(a.sessions) != serialize_log(c.sessions)


def test_pilot_like_shape(pilot_log):
    report = validate_sessions(pilot_log.sessions)
    assert report.n_sessions == 23
    assert 13 * 23 <= report.n_turns <= 17 * 23
    assert 0.7 <= report.rating_rate <= 0.9
    assert len({s.user.user_id for s in pilot_log.sessions}) == 7


def test_oracle_arrays_align(medium_log):
    f = build_frame(medium_log.sessions)
    assert medium_log.tool_probs.shape == (len(f), 4)
    assert medium_log.style_probs.shape == (len(f), 2)
    assert medium_log.q_rating.shape == (len(f), 8)
    np.testing.assert_allclose(medium_log.tool_probs.sum(1), 1.0)
    assert set(medium_log.truth) == {"NoTool", "AlwaysTool", "HeuristicGated", "PersonalizedWeights"}


def test_presets_resolve(tmp_path):
    for name in PRESETS:
        assert isinstance(resolve_spec(name), SyntheticSpec)
    path = tmp_path / "spec.json"
    spec = default_spec(n_sessions=7)
    path.write_text(json.dumps(spec.to_dict()))
    assert resolve_spec(path) == spec
