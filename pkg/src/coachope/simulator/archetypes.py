"""Hidden-archetype user simulator with verifiable tool tasks.

Policies act only through the (Tool, Style) heads. The user replies with a
structured observation (style and tool cues, whether they ask for an
explanation next), a 1-5 rating and the tool outcome. Policies never see
the archetype; they track it with a Bayesian posterior over the four cells
using the same cue model the simulator samples from.
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from ..core import (
    ARCHETYPES,
    ActionPair,
    Archetype,
    ContractError,
    CoachError,
    Level,
    StyleChoice,
    ToolChoice,
    ToolOutcome,
    TurnFeatures,
)
from ..rewards import (
    ArchetypePosterior,
    CuriositySchedule,
    RewardComponents,
    compose_reward,
    curiosity_bonus,
    engagement_reward,
    entropy_bits,
    tool_reward,
    weights_for,
)
from ..rng import substream


class TaskKind(enum.Enum):
    TIMESERIES_ANALYSIS = "timeseries_analysis"
    WELLNESS_API = "wellness_api"


TASK_TOOL = {TaskKind.TIMESERIES_ANALYSIS: ToolChoice.CODE, TaskKind.WELLNESS_API: ToolChoice.EMAIL}
TOOL_ORDER = (ToolChoice.SEARCH, ToolChoice.CODE, ToolChoice.EMAIL)


@dataclass
class SimTask:
    """A task with a checkable end state.

    Timeseries tasks need a successful Code call (the rolling-window table
    is produced); wellness tasks need a successful Email call (the reminder
    exists with its timestamp).
    """

    kind: TaskKind
    spec: dict
    completed: bool = False
    completed_turn: Optional[int] = None

    @property
    def tool(self) -> ToolChoice:
        return TASK_TOOL[self.kind]


class Cue(enum.Enum):
    OK = "ok"
    MORE = "more"
    LESS = "less"
    LIKED = "liked"
    DISLIKED = "disliked"
    NEUTRAL = "neutral"
    ABSENT = "absent"


STYLE_CUES = (Cue.OK, Cue.MORE, Cue.LESS)
TOOL_CUES = (Cue.LIKED, Cue.DISLIKED, Cue.NEUTRAL)


@dataclass(frozen=True)
class Observation:
    style_cue: Cue
    tool_cue: Cue
    asks_explain: bool
    confused: bool = False


@dataclass
class SimConfig:
    max_turns: int = 12
    tasks_per_episode: int = 2
    archetype_prior: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    tool_success: dict = field(default_factory=lambda: {
        ToolChoice.SEARCH: 0.816, ToolChoice.CODE: 0.807, ToolChoice.EMAIL: 0.857,
    })
    patience_range: tuple[float, float] = (1.5, 3.0)
    patience_rate: float = 0.5
    wait_cost: float = 0.3
    rating_base: float = 4.0
    rating_noise: float = 0.5
    style_match_bonus: float = 0.5
    # rating shift when a tool is used, by archetype (core.ARCHETYPES order)
    tool_affinity: tuple[float, ...] = (0.3, 0.6, -0.3, -0.8)
    no_tool_affinity: tuple[float, ...] = (-0.2, -0.2, 0.2, 0.2)
    failure_penalty: float = 1.0
    # P(style cue | agent style matches preference?) for matched, too-short, too-long replies
    cue_matched: tuple[float, float, float] = (0.6, 0.2, 0.2)
    cue_too_short: tuple[float, float, float] = (0.35, 0.5, 0.15)
    cue_too_long: tuple[float, float, float] = (0.35, 0.15, 0.5)
    # P(tool cue) after a tool call, by literacy
    tool_cue_high: tuple[float, float, float] = (0.75, 0.1, 0.15)
    tool_cue_low: tuple[float, float, float] = (0.15, 0.7, 0.15)
    confused_low_literacy: float = 0.3
    confused_high_literacy: float = 0.2
    explain_low_efficacy: float = 0.4
    explain_high_efficacy: float = 0.2
    id_threshold: float = 0.8
    gate_turns: int = 10
    # undecided or low literacy: tool-free turns between calls, and before the first
    tool_gap: int = 3
    warmup_turns: int = 1
    # probes within this many bits of the best expected gain count as ties
    probe_tolerance: float = 0.05

    def __post_init__(self):
        if self.max_turns < 1 or self.tasks_per_episode < 0:
            raise ContractError("max_turns must be >= 1 and tasks_per_episode >= 0")
        if abs(sum(self.archetype_prior) - 1) > 1e-9:
            raise ContractError("archetype_prior must sum to 1")
        self.tool_success = {ToolChoice(k) if isinstance(k, str) else k: float(v)
                             for k, v in self.tool_success.items()}

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["tool_success"] = {t.value: p for t, p in self.tool_success.items()}
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ContractError(f"unknown simulator config keys: {sorted(extra)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def preferred_style(arch: Archetype) -> StyleChoice:
    return StyleChoice.CONCISE if arch.efficacy is Level.HIGH else StyleChoice.DETAILED


def prefers_tools(arch: Archetype) -> bool:
    return arch.literacy is Level.HIGH


def aligned(arch: Archetype, action: ActionPair) -> bool:
    """Action matches the archetype's preferred tool intensity and style."""
    uses_tool = action.tool is not ToolChoice.NONE
    return uses_tool == prefers_tools(arch) and action.style is preferred_style(arch)


# -- observation model (shared by simulator and policy-side belief) -------


def _style_cue_probs(cfg: SimConfig, arch: Archetype, style: StyleChoice) -> tuple[float, ...]:
    pref = preferred_style(arch)
    if style is pref:
        return cfg.cue_matched
    return cfg.cue_too_short if style is StyleChoice.CONCISE else cfg.cue_too_long


def _tool_cue_probs(cfg: SimConfig, arch: Archetype) -> tuple[float, ...]:
    return cfg.tool_cue_high if arch.literacy is Level.HIGH else cfg.tool_cue_low


def _explain_prob(cfg: SimConfig, arch: Archetype) -> float:
    return cfg.explain_high_efficacy if arch.efficacy is Level.HIGH else cfg.explain_low_efficacy


def _confused_prob(cfg: SimConfig, arch: Archetype) -> float:
    return cfg.confused_high_literacy if arch.literacy is Level.HIGH else cfg.confused_low_literacy


def observation_likelihoods(cfg: SimConfig, obs: Observation, action: ActionPair) -> np.ndarray:
    """P(obs | archetype, action) for each archetype."""
    out = np.empty(len(ARCHETYPES))
    for i, arch in enumerate(ARCHETYPES):
        p = _style_cue_probs(cfg, arch, action.style)[STYLE_CUES.index(obs.style_cue)]
        if action.tool is ToolChoice.NONE:
            p *= obs.tool_cue is Cue.ABSENT
        else:
            p *= _tool_cue_probs(cfg, arch)[TOOL_CUES.index(obs.tool_cue)] if obs.tool_cue in TOOL_CUES else 0.0
        pe = _explain_prob(cfg, arch)
        pc = _confused_prob(cfg, arch)
        out[i] = p * (pe if obs.asks_explain else 1 - pe) * (pc if obs.confused else 1 - pc)
    return out


def possible_observations(action: ActionPair):
    tool_cues = (Cue.ABSENT,) if action.tool is ToolChoice.NONE else TOOL_CUES
    for s, t, e, c in itertools.product(STYLE_CUES, tool_cues, (False, True), (False, True)):
        yield Observation(s, t, e, c)


class DegeneratePosteriorError(CoachError):
    pass


def posterior_update(prior: ArchetypePosterior, likelihoods) -> ArchetypePosterior:
    """Bayes rule over the four archetypes."""
    lik = np.asarray(likelihoods, dtype=float)
    if lik.shape != (len(ARCHETYPES),) or (lik < 0).any():
        raise ContractError("likelihoods must be 4 nonnegative numbers")
    unnorm = prior.array() * lik
    z = unnorm.sum()
    if not z > 0:
        raise DegeneratePosteriorError("observation has zero likelihood under every archetype")
    post = unnorm / z
    # renormalize once more so the sum is 1 to machine precision
    return ArchetypePosterior.from_array(post / post.sum())


def expected_information_gain(cfg: SimConfig, prior: ArchetypePosterior, action: ActionPair) -> float:
    """Expected entropy drop (bits) of the posterior after observing the reply to ``action``."""
    p = prior.array()
    h0 = entropy_bits(p)
    gain = 0.0
    for obs in possible_observations(action):
        lik = observation_likelihoods(cfg, obs, action)
        joint = p * lik
        p_obs = joint.sum()
        if p_obs > 0:
            gain += p_obs * (h0 - entropy_bits(joint / p_obs))
    return gain


# -- user side ----------------------------------------------------------------


@dataclass
class SimUserState:
    """Hidden user state. ``archetype`` must never reach the policy."""

    archetype: Archetype
    patience: float
    rng: np.random.Generator
    turn: int = 0
    satisfaction: float = 0.0
    terminated: bool = False
    asks_explain: bool = False


def sample_episode(cfg: SimConfig, seed: int, episode: int = 0) -> tuple[SimUserState, list[SimTask]]:
    """Draw the hidden archetype, patience and task list for one episode.

    The response-noise generator attached to the state is seeded separately
    (see :func:`_response_rng`) so paired policies share the setup.
    """
    rng = substream(seed, "sim-episode", episode)
    arch = ARCHETYPES[int(rng.choice(len(ARCHETYPES), p=np.asarray(cfg.archetype_prior)))]
    patience = float(rng.uniform(*cfg.patience_range))
    tasks = []
    for j in range(cfg.tasks_per_episode):
        kind = TaskKind.TIMESERIES_ANALYSIS if rng.random() < 0.5 else TaskKind.WELLNESS_API
        if kind is TaskKind.TIMESERIES_ANALYSIS:
            spec = {
                "metric": str(rng.choice(["sleep_hours", "hrv_ms", "steps"])),
                "window_days": int(rng.choice([3, 7, 14])),
                "end_state": "rolling_window_table",
            }
        else:
            day = int(rng.integers(1, 29))
            hour = int(rng.integers(6, 22))
            spec = {
                "api": str(rng.choice(["set_reminder", "log_sleep"])),
                "timestamp": f"2025-03-{day:02d}T{hour:02d}:00:00",
                "end_state": "event_created",
            }
        tasks.append(SimTask(kind, spec))
    state = SimUserState(archetype=arch, patience=patience, rng=_response_rng(seed, episode, 0))
    state.asks_explain = bool(state.rng.random() < _explain_prob(cfg, arch))
    return state, tasks


def _response_rng(seed: int, episode: int, rollout: int) -> np.random.Generator:
    return substream(seed, "sim-response", episode, rollout)


def _pick(probs, u: float) -> int:
    return min(int(np.searchsorted(np.cumsum(probs), u, side="right")), len(probs) - 1)


def user_step(
    cfg: SimConfig, state: SimUserState, action: ActionPair, tasks: list[SimTask]
) -> tuple[Observation, int, ToolOutcome]:
    """Advance the user by one turn; mutates ``state`` and completes tasks."""
    if state.terminated:
        raise ContractError("episode already terminated")
    rng = state.rng
    arch = state.archetype
    k = ARCHETYPES.index(arch)
    state.turn += 1

    # fixed draws per turn so paired policies share the response noise
    u_success, u_style, u_tool, u_explain, u_confused = rng.random(5)
    noise = rng.normal(0.0, cfg.rating_noise)

    if action.tool is ToolChoice.NONE:
        outcome = ToolOutcome.NOT_INVOKED
    else:
        ok = u_success < cfg.tool_success[action.tool]
        outcome = ToolOutcome.SUCCESS if ok else ToolOutcome.FAILURE
        if ok:
            for task in tasks:
                if not task.completed and task.tool is action.tool:
                    task.completed, task.completed_turn = True, state.turn
                    break

    mu = cfg.rating_base
    mu += cfg.style_match_bonus if action.style is preferred_style(arch) else -cfg.style_match_bonus
    mu += cfg.tool_affinity[k] if action.tool is not ToolChoice.NONE else cfg.no_tool_affinity[k]
    if outcome is ToolOutcome.FAILURE:
        mu -= cfg.failure_penalty
    rating = int(np.clip(np.rint(mu + noise), 1, 5))

    style_cue = STYLE_CUES[_pick(_style_cue_probs(cfg, arch, action.style), u_style)]
    if action.tool is ToolChoice.NONE:
        tool_cue = Cue.ABSENT
    else:
        tool_cue = TOOL_CUES[_pick(_tool_cue_probs(cfg, arch), u_tool)]
    asks = bool(u_explain < _explain_prob(cfg, arch))
    obs = Observation(style_cue, tool_cue, asks, bool(u_confused < _confused_prob(cfg, arch)))

    state.asks_explain = asks
    state.satisfaction += rating
    state.patience += cfg.patience_rate * (rating - cfg.rating_base)
    if any(not t.completed for t in tasks):
        state.patience -= cfg.wait_cost
    if state.patience <= 0 or state.turn >= cfg.max_turns:
        state.terminated = True
    return obs, rating, outcome


# -- policies -------------------------------------------------------------------


class SimPolicy(enum.Enum):
    HEURISTIC = "heuristic"
    PERSONALIZED = "personalized"
    CURIOSITY = "curiosity"


@dataclass
class PolicyView:
    """Everything a policy may look at; the archetype is not here."""

    turn: int
    posterior: ArchetypePosterior
    pending: list[ToolChoice]
    prev_outcome: ToolOutcome
    since_tool: int
    asks_explain: bool


def _marginals(post: ArchetypePosterior) -> tuple[float, float]:
    p = post.array()
    lit_high = sum(p[i] for i, a in enumerate(ARCHETYPES) if a.literacy is Level.HIGH)
    eff_high = sum(p[i] for i, a in enumerate(ARCHETYPES) if a.efficacy is Level.HIGH)
    return float(lit_high), float(eff_high)


def heuristic_action(view: PolicyView, cfg: SimConfig) -> ActionPair:
    """Gate open on early turns unless the last call failed; concise unless asked to explain."""
    style = StyleChoice.DETAILED if view.asks_explain else StyleChoice.CONCISE
    gate = view.turn <= cfg.gate_turns and view.prev_outcome is not ToolOutcome.FAILURE
    if not gate:
        return ActionPair(ToolChoice.NONE, style)
    tool = view.pending[0] if view.pending else ToolChoice.SEARCH
    return ActionPair(tool, style)


def personalized_action(view: PolicyView, cfg: SimConfig, margin: float = 0.1) -> ActionPair:
    """Literacy belief moves the tool gate; efficacy belief picks the style.

    Believed high literacy: tool on every gated turn, Search once tasks are
    done. Otherwise (low or undecided): only task tools, with at least
    ``cfg.tool_gap`` tool-free turns in between.
    """
    lit_high, eff_high = _marginals(view.posterior)
    if eff_high > 0.5 + margin:
        style = StyleChoice.CONCISE
    elif eff_high < 0.5 - margin:
        style = StyleChoice.DETAILED
    else:
        style = StyleChoice.DETAILED if view.asks_explain else StyleChoice.CONCISE

    gate = view.turn <= cfg.gate_turns and view.prev_outcome is not ToolOutcome.FAILURE
    if lit_high > 0.5 + margin:
        if gate:
            return ActionPair(view.pending[0] if view.pending else ToolChoice.SEARCH, style)
        return ActionPair(ToolChoice.NONE, style)
    if view.pending and view.since_tool > cfg.tool_gap:
        return ActionPair(view.pending[0], style)
    return ActionPair(ToolChoice.NONE, style)


def curiosity_action(view: PolicyView, cfg: SimConfig, horizon_k: int) -> ActionPair:
    """Probe on the first ``horizon_k`` turns, then act as Personalized.

    The probe is the joint action with the largest expected information
    gain; ties are broken toward the Personalized choice, then toward a
    pending task's tool.
    """
    base = personalized_action(view, cfg)
    if view.turn > horizon_k:
        return base
    preferred_tools = [base.tool] + view.pending + [ToolChoice.SEARCH, ToolChoice.NONE]

    candidates = [ActionPair(t, s) for t in ToolChoice for s in StyleChoice]
    gains = [expected_information_gain(cfg, view.posterior, a) for a in candidates]
    best = max(gains)

    def rank(j: int):
        action = candidates[j]
        tie = preferred_tools.index(action.tool) if action.tool in preferred_tools else len(preferred_tools)
        return (tie, action.style is not base.style, -gains[j])

    near = [j for j, g in enumerate(gains) if g >= best - cfg.probe_tolerance]
    return candidates[min(near, key=rank)]


# -- episodes -----------------------------------------------------------------


@dataclass
class TurnRecord:
    turn: int
    action: ActionPair
    outcome: ToolOutcome
    rating: int
    observation: Observation
    posterior: ArchetypePosterior
    reward: float
    bonus: float
    curiosity: float
    aligned: bool

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "tool": self.action.tool.value,
            "style": self.action.style.value,
            "outcome": self.outcome.value,
            "rating": self.rating,
            "style_cue": self.observation.style_cue.value,
            "tool_cue": self.observation.tool_cue.value,
            "asks_explain": self.observation.asks_explain,
            "confused": self.observation.confused,
            "posterior": list(self.posterior.probs),
            "reward": self.reward,
            "bonus": self.bonus,
            "curiosity": self.curiosity,
            "aligned": self.aligned,
        }


@dataclass
class EpisodeTrace:
    seed: int
    episode: int
    rollout: int
    archetype: Archetype
    tasks: list[SimTask]
    turns: list[TurnRecord]
    id_threshold: float

    @property
    def final_return(self) -> float:
        return float(sum(t.reward + t.curiosity for t in self.turns))

    @property
    def goal_success(self) -> bool:
        """All tasks reached their end state; recomputed from the turn records."""
        needed = [t.tool for t in self.tasks]
        for rec in self.turns:
            if rec.outcome is ToolOutcome.SUCCESS and rec.action.tool in needed:
                needed.remove(rec.action.tool)
        return not needed

    @property
    def trait_id_turn(self) -> Optional[int]:
        for rec in self.turns:
            if rec.posterior.max_prob >= self.id_threshold:
                return rec.turn
        return None

    @property
    def trait_correct(self) -> bool:
        return bool(self.turns) and ARCHETYPES[self.turns[-1].posterior.argmax] is self.archetype

    @property
    def alignment_rate(self) -> float:
        return float(np.mean([t.aligned for t in self.turns])) if self.turns else 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "episode": self.episode,
            "rollout": self.rollout,
            "archetype": self.archetype.label,
            "tasks": [
                {"kind": t.kind.value, "spec": t.spec, "completed": t.completed,
                 "completed_turn": t.completed_turn}
                for t in self.tasks
            ],
            "turns": [t.to_dict() for t in self.turns],
            "final_return": self.final_return,
            "goal_success": self.goal_success,
            "trait_id_turn": self.trait_id_turn,
            "trait_correct": self.trait_correct,
            "alignment_rate": self.alignment_rate,
        }


def _sim_features(turn: int, action: ActionPair, outcome: ToolOutcome, asked: bool) -> TurnFeatures:
    latency = {ToolChoice.NONE: 4.0, ToolChoice.SEARCH: 14.0, ToolChoice.CODE: 24.0, ToolChoice.EMAIL: 8.0}
    detailed = action.style is StyleChoice.DETAILED
    return TurnFeatures(
        turn_index=turn,
        latency_seconds=latency[action.tool] + (6.0 if detailed else 0.0),
        response_chars=2200 if detailed else 700,
        has_citation=action.tool is ToolChoice.SEARCH and outcome is ToolOutcome.SUCCESS,
        has_structure=detailed,
        user_asked_explain=asked,
    )


def rollout(
    policy: SimPolicy,
    cfg: SimConfig,
    seed: int,
    episode: int,
    rollout_index: int = 0,
    schedule: Optional[CuriositySchedule] = None,
) -> EpisodeTrace:
    """Run one episode. The curiosity bonus is credited only for the curiosity policy."""
    state, tasks = sample_episode(cfg, seed, episode)
    if rollout_index:
        state.rng = _response_rng(seed, episode, rollout_index)
        state.asks_explain = bool(state.rng.random() < _explain_prob(cfg, state.archetype))
    schedule = schedule or CuriositySchedule()
    credit = policy is SimPolicy.CURIOSITY
    posterior = ArchetypePosterior.from_array(cfg.archetype_prior)
    weights = weights_for(state.archetype.literacy)
    prev_outcome, since_tool = ToolOutcome.NOT_INVOKED, cfg.max_turns if cfg.warmup_turns == 0 else cfg.tool_gap + 1 - cfg.warmup_turns
    records = []
    while not state.terminated:
        t = state.turn + 1
        view = PolicyView(
            turn=t,
            posterior=posterior,
            pending=[task.tool for task in tasks if not task.completed],
            prev_outcome=prev_outcome,
            since_tool=since_tool,
            asks_explain=state.asks_explain,
        )
        asked = state.asks_explain
        if policy is SimPolicy.HEURISTIC:
            action = heuristic_action(view, cfg)
        elif policy is SimPolicy.PERSONALIZED:
            action = personalized_action(view, cfg)
        else:
            action = curiosity_action(view, cfg, schedule.horizon_k)
        obs, rating, outcome = user_step(cfg, state, action, tasks)
        new_post = posterior_update(posterior, observation_likelihoods(cfg, obs, action))
        bonus = curiosity_bonus(posterior, new_post)
        comps = RewardComponents(
            r_user=rating - cfg.rating_base,
            r_tool=tool_reward(action.tool, outcome),
            r_eng=engagement_reward(_sim_features(t, action, outcome, asked), action.tool),
        )
        records.append(TurnRecord(
            turn=t,
            action=action,
            outcome=outcome,
            rating=rating,
            observation=obs,
            posterior=new_post,
            reward=compose_reward(weights, comps),
            bonus=bonus,
            curiosity=schedule.weight(t) * bonus if credit else 0.0,
            aligned=aligned(state.archetype, action),
        ))
        posterior, prev_outcome = new_post, outcome
        since_tool = 1 if action.tool is not ToolChoice.NONE else since_tool + 1
    return EpisodeTrace(seed, episode, rollout_index, state.archetype, tasks, records, cfg.id_threshold)


@dataclass
class SimMetrics:
    policy: str
    n_episodes: int
    final_return: float
    goal_success: float
    pass_at_3: float
    trait_id_turn: float
    trait_id_rate: float
    trait_accuracy: float
    archetype_alignment: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def aggregate(policy_label: str, episodes: list[list[EpisodeTrace]]) -> SimMetrics:
    """Metrics over episodes; each entry holds that episode's rollouts, main rollout first.

    The trait-ID mean is over identified episodes only (NaN when none are);
    ``trait_id_rate`` gives the identified fraction.
    """
    main = [rolls[0] for rolls in episodes]
    ids = [tr.trait_id_turn for tr in main]
    hits = [i for i in ids if i is not None]
    return SimMetrics(
        policy=policy_label,
        n_episodes=len(main),
        final_return=float(np.mean([tr.final_return for tr in main])),
        goal_success=float(np.mean([tr.goal_success for tr in main])),
        pass_at_3=float(np.mean([any(r.goal_success for r in rolls[:3]) for rolls in episodes])),
        trait_id_turn=float(np.mean(hits)) if hits else float("nan"),
        trait_id_rate=float(np.mean([i is not None for i in ids])),
        trait_accuracy=float(np.mean([tr.trait_correct for tr in main])),
        archetype_alignment=float(np.mean([tr.alignment_rate for tr in main])),
    )


def _episode_rollouts(policy, cfg, seed, schedule, n_rollouts, episode) -> list[EpisodeTrace]:
    return [rollout(policy, cfg, seed, episode, r, schedule) for r in range(n_rollouts)]


def run_policy(
    policy: SimPolicy,
    n_episodes: int,
    schedule: Optional[CuriositySchedule] = None,
    seed: int = 0,
    cfg: Optional[SimConfig] = None,
    n_rollouts: int = 3,
    return_traces: bool = False,
    workers: int = 1,
):
    """Simulate ``n_episodes`` paired-seed episodes; episode ``i`` has the same
    hidden setup for every policy run with the same seed.

    Episodes are independent, so ``workers > 1`` farms them out to processes;
    results are identical to the serial run.
    """
    if n_episodes < 1:
        raise ContractError("n_episodes must be >= 1")
    if n_rollouts < 1:
        raise ContractError("n_rollouts must be >= 1")
    cfg = cfg or SimConfig()
    schedule = schedule or CuriositySchedule()
    job = partial(_episode_rollouts, policy, cfg, seed, schedule, n_rollouts)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(job, range(n_episodes), chunksize=16))
    else:
        episodes = [job(i) for i in range(n_episodes)]
    label = policy.value
    if policy is SimPolicy.CURIOSITY:
        label = f"curiosity(lambda={schedule.lam:g},k={schedule.horizon_k})"
    metrics = aggregate(label, episodes)
    return (metrics, episodes) if return_traces else metrics
