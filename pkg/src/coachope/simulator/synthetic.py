"""Synthetic logged-bandit sessions with exactly computable policy values.

Every context feature that drives the logging policy, the target policies
or the reward means is discrete (turn index, three booleans, literacy,
efficacy, previous tool outcome), so the per-turn context distribution
induced by the logging policy can be propagated turn by turn and each
policy's value summed exactly. Latency and response length are nuisance
observables; latency only enters through the closed-form mean of the
engagement penalty.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core import (
    ARCHETYPES,
    STYLES,
    TOOLS,
    ActionPair,
    Level,
    LoggedTurn,
    Session,
    ToolOutcome,
    TurnFeatures,
    UserProfile,
)
from ..behavior import HeadPropensityModel, RatingPropensityModel
from ..features import LogFrame, build_frame
from ..ope import OpeContext, OutcomeModel, literacy_weights
from ..policies import PolicyName, PolicySpec
from ..rewards import DEFAULT_WEIGHTS, ENG_WEIGHT, LATENCY_CAP, LATENCY_SCALE
from ..rng import substream

# logit inputs: [1, turn_index, has_citation, has_structure, asked_explain,
#                literacy_high, efficacy_high, prev_outcome]
N_PHI = 8


@dataclass
class SyntheticSpec:
    n_sessions: int = 500
    n_users: Optional[int] = None
    turns_min: int = 10
    turns_max: int = 10
    archetype_prior: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    p_citation: float = 0.5
    p_structure: float = 0.5
    p_explain_low_efficacy: float = 0.4
    p_explain_high_efficacy: float = 0.15
    latency_range: tuple[float, float] = (2.0, 50.0)
    chars_range: tuple[int, int] = (200, 3000)
    # logging policy: softmax(logits @ phi); rows are actions
    tool_logits: list = field(default_factory=lambda: [[0.0] * N_PHI for _ in range(4)])
    style_logits: list = field(default_factory=lambda: [[0.0] * N_PHI for _ in range(2)])
    # success probability per archetype (rows, ARCHETYPES order) x tool (search, code, email)
    tool_success: list = field(default_factory=lambda: [[0.816, 0.807, 0.857]] * 4)
    rating_base: float = 4.0
    rating_tool_effect: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    rating_detailed_effect: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    rating_explain_detailed: float = 0.0
    rating_failure: float = -1.0
    rating_turn_slope: float = 0.0
    rating_efficacy_high: float = 0.0
    # P(rated | x) = sigmoid(rate_logits @ phi)
    rate_logits: list = field(default_factory=lambda: [6.0] + [0.0] * (N_PHI - 1))

    def __post_init__(self):
        self.archetype_prior = tuple(self.archetype_prior)
        self.latency_range = tuple(self.latency_range)
        self.chars_range = tuple(self.chars_range)
        self.rating_tool_effect = tuple(self.rating_tool_effect)
        self.rating_detailed_effect = tuple(self.rating_detailed_effect)
        if abs(sum(self.archetype_prior) - 1) > 1e-9 or len(self.archetype_prior) != 4:
            raise ValueError("archetype_prior must be a distribution over 4 archetypes")
        if not 1 <= self.turns_min <= self.turns_max:
            raise ValueError("need 1 <= turns_min <= turns_max")
        for name, shape in (("tool_logits", (4, N_PHI)), ("style_logits", (2, N_PHI)),
                            ("tool_success", (4, 3))):
            if np.asarray(getattr(self, name)).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        if len(self.rate_logits) != N_PHI:
            raise ValueError(f"rate_logits must have {N_PHI} entries")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _phi(t, cit, struct, expl, lit, eff, prev) -> np.ndarray:
    return np.stack(np.broadcast_arrays(
        np.ones_like(np.asarray(t, dtype=float)), t, cit, struct, expl, lit, eff, prev
    ), axis=-1).astype(float)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def expected_latency_term(lo: float, hi: float) -> float:
    """E[min(L/30, 1.5)] for L ~ Uniform(lo, hi)."""
    cap = LATENCY_SCALE * LATENCY_CAP
    if hi <= lo:
        return min(lo / LATENCY_SCALE, LATENCY_CAP)
    if hi <= cap:
        return (lo + hi) / 2 / LATENCY_SCALE
    if lo >= cap:
        return LATENCY_CAP
    linear = (cap ** 2 - lo ** 2) / 2 / LATENCY_SCALE
    return (linear + LATENCY_CAP * (hi - cap)) / (hi - lo)


class _Model:
    """Vectorized conditional distributions of the generating process."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.tool_w = np.asarray(spec.tool_logits, dtype=float)
        self.style_w = np.asarray(spec.style_logits, dtype=float)
        self.rate_w = np.asarray(spec.rate_logits, dtype=float)
        self.success = np.asarray(spec.tool_success, dtype=float)

    def behavior(self, phi):
        return _softmax(phi @ self.tool_w.T), _softmax(phi @ self.style_w.T)

    def rate_prob(self, phi):
        return _sigmoid(phi @ self.rate_w)

    def p_success(self, arch: np.ndarray, tool: np.ndarray) -> np.ndarray:
        """Success probability; 0 where tool is None (index 0)."""
        out = np.zeros(np.broadcast(arch, tool).shape)
        arch, tool = np.broadcast_arrays(arch, tool)
        used = tool > 0
        out[used] = self.success[arch[used], tool[used] - 1]
        return out

    def rating_mean(self, arch, t, expl, tool, style, failed) -> np.ndarray:
        s = self.spec
        eff_high = np.array([a.efficacy is Level.HIGH for a in ARCHETYPES])[arch]
        mu = (
            s.rating_base
            + np.asarray(s.rating_tool_effect)[arch] * (tool > 0)
            + np.asarray(s.rating_detailed_effect)[arch] * (style == 1)
            + s.rating_explain_detailed * expl * (style == 1)
            + s.rating_failure * failed
            + s.rating_turn_slope * (t - 1)
            + s.rating_efficacy_high * eff_high
        )
        return np.clip(mu, 1.0, 5.0)

    def expected_rating(self, arch, t, expl, tool, style) -> np.ndarray:
        ps = self.p_success(arch, tool)
        ok = self.rating_mean(arch, t, expl, tool, style, 0.0)
        bad = self.rating_mean(arch, t, expl, tool, style, 1.0)
        return np.where(tool > 0, ps * ok + (1 - ps) * bad, ok)


@dataclass
class ContextTable:
    """Every reachable discrete context with its weight in the per-turn average."""

    frame: LogFrame
    weight: np.ndarray
    arch: np.ndarray


def _context_table(spec: SyntheticSpec) -> ContextTable:
    model = _Model(spec)
    n_len = spec.turns_max - spec.turns_min + 1
    reach = np.array([
        min(1.0, max(0.0, (spec.turns_max - t + 1) / n_len)) for t in range(1, spec.turns_max + 1)
    ])
    combos = np.array([(c, s, e) for c in (0, 1) for s in (0, 1) for e in (0, 1)])
    prevs = np.array([-1, 0, 1])
    rows = []
    for a_idx, arch in enumerate(ARCHETYPES):
        lit = int(arch.literacy is Level.HIGH)
        eff = int(arch.efficacy is Level.HIGH)
        p_expl = spec.p_explain_high_efficacy if eff else spec.p_explain_low_efficacy
        p_prev = np.array([0.0, 1.0, 0.0])
        for t in range(1, spec.turns_max + 1):
            nxt = np.zeros(3)
            for pi, prev in enumerate(prevs):
                if p_prev[pi] == 0:
                    continue
                for cit, struct, expl in combos:
                    w = (
                        p_prev[pi]
                        * (spec.p_citation if cit else 1 - spec.p_citation)
                        * (spec.p_structure if struct else 1 - spec.p_structure)
                        * (p_expl if expl else 1 - p_expl)
                    )
                    phi = _phi(t, cit, struct, expl, lit, eff, prev)
                    tool_p, _ = model.behavior(phi[None])
                    ps = model.p_success(np.full(3, a_idx), np.arange(1, 4))
                    nxt[1] += w * tool_p[0, 0]
                    nxt[2] += w * (tool_p[0, 1:] * ps).sum()
                    nxt[0] += w * (tool_p[0, 1:] * (1 - ps)).sum()
                    rows.append((a_idx, t, cit, struct, expl, lit, eff, prev,
                                 spec.archetype_prior[a_idx] * reach[t - 1] * w))
            p_prev = nxt
    arr = np.array(rows, dtype=float)
    n = len(arr)
    mid_latency = float(np.mean(spec.latency_range))
    frame = LogFrame(
        session_ids=("ctx",),
        session=np.zeros(n, dtype=int),
        user_ids=np.full(n, "ctx", dtype=object),
        turn_index=arr[:, 1].astype(int),
        latency=np.full(n, mid_latency),
        chars=np.full(n, int(np.mean(spec.chars_range))),
        has_citation=arr[:, 2].astype(bool),
        has_structure=arr[:, 3].astype(bool),
        asked_explain=arr[:, 4].astype(bool),
        literacy_high=arr[:, 5].astype(bool),
        efficacy_high=arr[:, 6].astype(bool),
        prev_outcome=arr[:, 7].astype(int),
        tool=np.zeros(n, dtype=int),
        style=np.zeros(n, dtype=int),
        outcome=np.zeros(n, dtype=int),
        rating=np.full(n, np.nan),
        rated=np.zeros(n, dtype=bool),
        r_tool=np.zeros(n),
        r_eng=np.zeros(n),
    )
    return ContextTable(frame=frame, weight=arr[:, 8], arch=arr[:, 0].astype(int))


@dataclass
class PolicyTruth:
    r_obj: float
    r_user: float
    r_total: float
    per_archetype: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _reward_tables(spec: SyntheticSpec, ctx: ContextTable):
    """Expected (r_obj, rating, r_tool, r_eng) per context and joint action, shape (n, 8)."""
    model = _Model(spec)
    f = ctx.frame
    n = len(f)
    lat = expected_latency_term(*spec.latency_range)
    obj = np.zeros((n, 8))
    rating = np.zeros((n, 8))
    rtool = np.zeros((n, 8))
    reng = np.zeros((n, 8))
    for j in range(8):
        tool, style = j // 2, j % 2
        ps = model.p_success(ctx.arch, np.full(n, tool))
        rtool[:, j] = np.where(tool > 0, 2 * ps - 1, 0.0)
        reng[:, j] = ENG_WEIGHT * (-lat + f.has_structure + f.has_citation * (tool == 1))
        obj[:, j] = rtool[:, j] + reng[:, j]
        rating[:, j] = model.expected_rating(ctx.arch, f.turn_index, f.asked_explain, tool, style)
    return obj, rating, rtool, reng


def _joint(policy, frame: LogFrame) -> np.ndarray:
    tool_p, style_p = policy.eval_probs(frame)
    return (tool_p[:, :, None] * style_p[:, None, :]).reshape(len(frame), -1)


def analytic_value(spec: SyntheticSpec, policy, weight_presets: Optional[dict] = None) -> PolicyTruth:
    """Exact per-turn expected rewards of ``policy`` on logs drawn from ``spec``.

    The user reward is the raw 1-5 rating.
    """
    presets = weight_presets or DEFAULT_WEIGHTS
    ctx = _context_table(spec)
    obj, rating, rtool, reng = _reward_tables(spec, ctx)
    pj = _joint(policy, ctx.frame)
    alpha, beta, gamma = np.where(
        ctx.frame.literacy_high[:, None],
        np.array(presets[Level.HIGH].as_tuple()),
        np.array(presets[Level.LOW].as_tuple()),
    ).T
    v_obj = (pj * obj).sum(1)
    v_user = (pj * rating).sum(1)
    v_total = alpha * v_user + (pj * (beta[:, None] * rtool + gamma[:, None] * reng)).sum(1)

    def avg(v, mask):
        w = ctx.weight * mask
        return float((w * v).sum() / w.sum()) if w.sum() > 0 else None

    every = np.ones(len(ctx.weight), dtype=bool)
    per_arch = {}
    for k, arch in enumerate(ARCHETYPES):
        mask = ctx.arch == k
        if spec.archetype_prior[k] > 0:
            per_arch[arch.label] = {"r_obj": avg(v_obj, mask), "r_user": avg(v_user, mask)}
    return PolicyTruth(avg(v_obj, every), avg(v_user, every), avg(v_total, every), per_arch)


def logged_tool_mix(spec: SyntheticSpec) -> tuple[float, float, float]:
    """Population share of (Search, Code, Email) among tool-invoking logged turns."""
    ctx = _context_table(spec)
    tool_p, _ = _Model(spec).behavior(_phi_of(ctx.frame))
    mass = (ctx.weight[:, None] * tool_p[:, 1:]).sum(0)
    mix = mass / mass.sum()
    return tuple(float(x) for x in mix)


def _phi_of(frame: LogFrame) -> np.ndarray:
    return _phi(frame.turn_index, frame.has_citation, frame.has_structure, frame.asked_explain,
                frame.literacy_high, frame.efficacy_high, frame.prev_outcome)


def named_policies(spec: SyntheticSpec) -> list[PolicySpec]:
    """The four comparison policies, AlwaysTool using the population logged mix."""
    return [
        PolicySpec(PolicyName.NO_TOOL),
        PolicySpec(PolicyName.ALWAYS_TOOL, tool_mix=logged_tool_mix(spec)),
        PolicySpec(PolicyName.HEURISTIC_GATED),
        PolicySpec(PolicyName.PERSONALIZED_WEIGHTS),
    ]


@dataclass
class SyntheticLog:
    """Generated sessions plus the generating process's per-turn nuisance truths.

    Oracle arrays are aligned with ``build_frame(sessions)``.
    """

    spec: SyntheticSpec
    seed: int
    sessions: list[Session]
    tool_probs: np.ndarray
    style_probs: np.ndarray
    rate_probs: np.ndarray
    q_rating: np.ndarray
    truth: dict

    def oracle_context(self, weight_presets: Optional[dict] = None) -> OpeContext:
        """OPE context built from the generating process: true logging and
        rating propensities and the exact expected-rating table. The user
        reward is the raw rating, matching :func:`analytic_value`."""
        frame = build_frame(self.sessions)
        return OpeContext(
            frame=frame,
            tool_model=HeadPropensityModel.from_known("tool", self.tool_probs),
            style_model=HeadPropensityModel.from_known("style", self.style_probs),
            rating_model=RatingPropensityModel.from_known(self.rate_probs),
            outcome_model=OutcomeModel.from_known(self.q_rating),
            r_user=frame.rating.copy(),
            weights=literacy_weights(frame, weight_presets),
        )

    def truth_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "spec": self.spec.to_dict(), "truth": self.truth},
            sort_keys=True, indent=2,
        )


def generate_synthetic_bandit_log(
    spec: SyntheticSpec,
    seed: int,
    policies: Optional[list] = None,
) -> SyntheticLog:
    """Draw a log from ``spec``; identical ``(spec, seed)`` gives an identical log.

    Turns are generated in lockstep across sessions, one turn index at a time.
    """
    rng = substream(seed, "synth")
    model = _Model(spec)
    n_users = spec.n_users or spec.n_sessions
    n = spec.n_sessions
    user_arch = rng.choice(4, size=n_users, p=np.asarray(spec.archetype_prior))
    user_of = np.arange(n) % n_users
    arch = user_arch[user_of]
    lit = np.array([a.literacy is Level.HIGH for a in ARCHETYPES])[arch].astype(int)
    eff = np.array([a.efficacy is Level.HIGH for a in ARCHETYPES])[arch].astype(int)
    p_expl = np.where(eff, spec.p_explain_high_efficacy, spec.p_explain_low_efficacy)
    length = rng.integers(spec.turns_min, spec.turns_max + 1, size=n)
    lat_lo, lat_hi = spec.latency_range
    ch_lo, ch_hi = spec.chars_range

    steps = []
    prev = np.zeros(n, dtype=int)
    for t in range(1, spec.turns_max + 1):
        cit = rng.random(n) < spec.p_citation
        struct = rng.random(n) < spec.p_structure
        expl = rng.random(n) < p_expl
        latency = np.round(rng.uniform(lat_lo, lat_hi, size=n), 3)
        chars = rng.integers(ch_lo, ch_hi + 1, size=n)
        phi = _phi(np.full(n, t), cit, struct, expl, lit, eff, prev)
        tool_p, style_p = model.behavior(phi)
        tool = (rng.random(n)[:, None] > np.cumsum(tool_p, axis=1)[:, :-1]).sum(axis=1)
        style = (rng.random(n) < style_p[:, 1]).astype(int)
        ok = rng.random(n) < model.p_success(arch, tool)
        signed = np.where(tool == 0, 0, np.where(ok, 1, -1))
        mu = model.rating_mean(arch, t, expl, tool, style, (signed == -1).astype(float))
        rating = np.floor(mu).astype(int) + (rng.random(n) < mu - np.floor(mu))
        p_rate = model.rate_prob(phi)
        rated = rng.random(n) < p_rate
        q = np.stack([
            model.expected_rating(arch, t, expl, np.full(n, j // 2), np.full(n, j % 2))
            for j in range(8)
        ], axis=1)
        steps.append(dict(cit=cit, struct=struct, expl=expl, latency=latency, chars=chars,
                          tool=tool, style=style, signed=signed, rating=rating, rated=rated,
                          tool_p=tool_p, style_p=style_p, p_rate=p_rate, q=q))
        prev = signed

    width = len(str(max(n, n_users)))
    users = [
        UserProfile(f"u{u:0{width}d}", ARCHETYPES[a].literacy, ARCHETYPES[a].efficacy)
        for u, a in enumerate(user_arch)
    ]
    outcomes = {0: ToolOutcome.NOT_INVOKED, 1: ToolOutcome.SUCCESS, -1: ToolOutcome.FAILURE}
    sessions = []
    tool_rows, style_rows, rate_rows, q_rows = [], [], [], []
    for k in range(n):
        sid = f"s{k:0{width}d}"
        turns = []
        for t in range(int(length[k])):
            st = steps[t]
            features = TurnFeatures(
                t + 1, float(st["latency"][k]), int(st["chars"][k]),
                bool(st["cit"][k]), bool(st["struct"][k]), bool(st["expl"][k]),
            )
            turns.append(LoggedTurn(
                sid, features,
                ActionPair(TOOLS[st["tool"][k]], STYLES[st["style"][k]]),
                outcomes[int(st["signed"][k])],
                int(st["rating"][k]) if st["rated"][k] else None,
            ))
            tool_rows.append(st["tool_p"][k])
            style_rows.append(st["style_p"][k])
            rate_rows.append(st["p_rate"][k])
            q_rows.append(st["q"][k])
        sessions.append(Session(sid, users[user_of[k]], tuple(turns)))

    policies = policies if policies is not None else named_policies(spec)
    truth = {p.display_name: analytic_value(spec, p).to_dict() for p in policies}
    return SyntheticLog(
        spec=spec,
        seed=seed,
        sessions=sessions,
        tool_probs=np.array(tool_rows),
        style_probs=np.array(style_rows),
        rate_probs=np.array(rate_rows),
        q_rating=np.array(q_rows),
        truth=truth,
    )


# -- presets -------------------------------------------------------------

def _logits(**by_feature) -> list:
    """Build one logit row from named coefficients."""
    names = ["bias", "turn", "citation", "structure", "explain", "literacy", "efficacy", "prev"]
    return [float(by_feature.get(n, 0.0)) for n in names]


def default_spec(**overrides) -> SyntheticSpec:
    """Feature-dependent logging, tool-rating effects, and MAR rating missingness."""
    spec = SyntheticSpec(
        n_sessions=500,
        turns_min=8,
        turns_max=12,
        tool_logits=[
            _logits(),
            _logits(bias=-0.2, citation=1.2, literacy=0.4, prev=0.3),
            _logits(bias=0.0, citation=-0.6, literacy=0.5, turn=-0.05, prev=0.3),
            _logits(bias=-1.0, turn=0.05),
        ],
        style_logits=[
            _logits(),
            _logits(bias=-0.3, explain=1.2, efficacy=-0.5),
        ],
        tool_success=[
            [0.85, 0.85, 0.90],
            [0.85, 0.85, 0.90],
            [0.70, 0.65, 0.80],
            [0.60, 0.55, 0.75],
        ],
        rating_base=4.3,
        rating_tool_effect=(0.1, 0.5, -0.3, -0.8),
        rating_detailed_effect=(-0.2, 0.4, 0.3, -0.3),
        rating_explain_detailed=0.4,
        rating_failure=-0.8,
        rating_turn_slope=-0.2,
        rating_efficacy_high=1.0,
        # later turns and low-efficacy users rate less often and lower: MAR selection
        rate_logits=_logits(bias=2.6, turn=-0.25, efficacy=0.8),
    )
    return replace(spec, **overrides)


def subgroup_harm_spec(**overrides) -> SyntheticSpec:
    """Tools pay off for high literacy and hurt low-literacy/high-efficacy users."""
    base = default_spec()
    spec = replace(
        base,
        tool_success=[
            [0.8, 0.8, 0.8],
            [0.8, 0.8, 0.8],
            [0.55, 0.55, 0.55],
            [0.3, 0.3, 0.3],
        ],
        rating_tool_effect=(0.0, 0.6, -0.2, -1.0),
    )
    return replace(spec, **overrides)


def pilot_like_spec(**overrides) -> SyntheticSpec:
    """Roughly the pilot's shape: 7 users, 23 sessions, ~350 turns, ~80% rated."""
    spec = default_spec(
        n_sessions=23,
        n_users=7,
        turns_min=13,
        turns_max=17,
        rating_turn_slope=-0.12,
        rate_logits=_logits(bias=2.7, turn=-0.15, efficacy=0.8),
    )
    return replace(spec, **overrides)


def uniform_spec(**overrides) -> SyntheticSpec:
    """Uniform logging over the 8 joint actions; rewards do not depend on context."""
    spec = SyntheticSpec(
        n_sessions=200,
        p_explain_low_efficacy=0.3,
        p_explain_high_efficacy=0.3,
        latency_range=(30.0, 30.0),
        p_structure=0.0,
        p_citation=0.0,
        tool_success=[[0.8, 0.6, 0.9]] * 4,
    )
    return replace(spec, **overrides)


PRESETS = {
    "default": default_spec,
    "subgroup-harm": subgroup_harm_spec,
    "pilot": pilot_like_spec,
    "uniform": uniform_spec,
}


def resolve_spec(name_or_path: Union[str, Path]) -> SyntheticSpec:
    key = str(name_or_path)
    if key in PRESETS:
        return PRESETS[key]()
    return SyntheticSpec.load(key)
