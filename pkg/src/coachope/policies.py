"""Target policies over the (Tool, Style) heads and importance ratios."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .behavior import HeadPropensityModel, floor_mix
from .core import STYLES, TOOLS, ContractError, Session, StyleChoice, ToolChoice
from .features import FeatureVector, LogFrame, build_frame

POLICY_EPS = 0.01
DEFAULT_CLIP = 50.0

_T = {t: i for i, t in enumerate(TOOLS)}
_S = {s: i for i, s in enumerate(STYLES)}


class PolicyName(enum.Enum):
    NO_TOOL = "NoTool"
    ALWAYS_TOOL = "AlwaysTool"
    HEURISTIC_GATED = "HeuristicGated"
    PERSONALIZED_WEIGHTS = "PersonalizedWeights"
    CUSTOM = "Custom"


_ALIASES = {
    "notool": PolicyName.NO_TOOL,
    "alwaystool": PolicyName.ALWAYS_TOOL,
    "heuristic": PolicyName.HEURISTIC_GATED,
    "heuristicgated": PolicyName.HEURISTIC_GATED,
    "personalized": PolicyName.PERSONALIZED_WEIGHTS,
    "personalizedweights": PolicyName.PERSONALIZED_WEIGHTS,
}


def _discretize(frame: LogFrame, name: str, early_turns: int) -> np.ndarray:
    if name == "literacy":
        return np.where(frame.literacy_high, "high", "low")
    if name == "efficacy":
        return np.where(frame.efficacy_high, "high", "low")
    if name in ("has_citation", "has_structure"):
        return np.where(getattr(frame, name), "true", "false")
    if name == "user_asked_explain":
        return np.where(frame.asked_explain, "true", "false")
    if name == "prev_outcome":
        return np.choose(frame.prev_outcome + 1, ["failure", "none", "success"])
    if name == "turn":
        return np.where(frame.turn_index <= early_turns, "early", "late")
    raise ContractError(f"unknown custom-policy key feature {name!r}")


@dataclass(frozen=True)
class PolicySpec:
    """A target policy. Immutable; probabilities are a pure function of context.

    Parameters
    ----------
    gate_turns
        The tool gate is open only on the first ``gate_turns`` turns of a
        session and only if the previous tool call did not fail.
    literacy_shift
        PersonalizedWeights adds this to the gate probability for
        high-literacy users and subtracts it for low-literacy users.
    tool_mix
        AlwaysTool's (Search, Code, Email) distribution, normally the
        logged conditional among tool-invoking turns.
    eps
        Smoothing applied to deterministic heads before ratio computation.
    """

    name: PolicyName
    gate_turns: int = 10
    literacy_shift: float = 0.2
    tool_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    eps: float = POLICY_EPS
    label: Optional[str] = None
    custom_keys: tuple[str, ...] = ()
    custom_tool: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    custom_style: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.tool_mix) != 3 or min(self.tool_mix) < 0 or abs(sum(self.tool_mix) - 1) > 1e-9:
            raise ContractError(f"tool_mix must be a distribution over 3 tools, got {self.tool_mix}")
        if not 0 <= self.literacy_shift <= 1:
            raise ContractError("literacy_shift must lie in [0, 1]")
        if self.name is PolicyName.CUSTOM:
            for table, k in ((self.custom_tool, 4), (self.custom_style, 2)):
                if "default" not in table:
                    raise ContractError("custom policy tables need a 'default' row")
                for key, row in table.items():
                    if len(row) != k or min(row) < 0 or abs(sum(row) - 1) > 1e-9:
                        raise ContractError(f"custom row {key!r} is not a distribution over {k} actions")

    @property
    def display_name(self) -> str:
        return self.label or self.name.value

    @classmethod
    def named(cls, name: str, **kwargs) -> "PolicySpec":
        key = name.replace("_", "").replace("-", "").lower()
        if key not in _ALIASES:
            raise ContractError(f"unknown policy {name!r}")
        return cls(_ALIASES[key], **kwargs)

    @classmethod
    def from_config(cls, cfg: Mapping) -> "PolicySpec":
        """Build from a dict such as::

            {"name": "custom", "key": ["literacy"],
             "tool": {"high": [0.1, 0.5, 0.3, 0.1], "default": [1, 0, 0, 0]},
             "style": {"default": [0.5, 0.5]}}
        """
        cfg = dict(cfg)
        name = cfg.pop("name")
        if name.lower() != "custom":
            if "tool_mix" in cfg:
                cfg["tool_mix"] = tuple(cfg["tool_mix"])
            return cls.named(name, **cfg)
        return cls(
            PolicyName.CUSTOM,
            label=cfg.get("label", "Custom"),
            custom_keys=tuple(cfg.get("key", ())),
            custom_tool={k: tuple(float(x) for x in v) for k, v in cfg["tool"].items()},
            custom_style={k: tuple(float(x) for x in v) for k, v in cfg["style"].items()},
            gate_turns=cfg.get("gate_turns", 10),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PolicySpec":
        return cls.from_config(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = {
            "name": self.display_name,
            "gate_turns": self.gate_turns,
            "literacy_shift": self.literacy_shift,
            "tool_mix": list(self.tool_mix),
            "eps": self.eps,
        }
        if self.name is PolicyName.CUSTOM:
            out = {
                "name": "custom",
                "label": self.display_name,
                "gate_turns": self.gate_turns,
            }
            out.update(
                key=list(self.custom_keys),
                tool={k: list(v) for k, v in self.custom_tool.items()},
                style={k: list(v) for k, v in self.custom_style.items()},
            )
        return out

    # -- probabilities -------------------------------------------------

    def _gate(self, frame: LogFrame) -> np.ndarray:
        return (frame.turn_index <= self.gate_turns) & (frame.prev_outcome != -1)

    def _style_rule(self, frame: LogFrame) -> np.ndarray:
        style = np.zeros((len(frame), len(STYLES)))
        detailed = frame.asked_explain
        style[:, _S[StyleChoice.DETAILED]] = detailed
        style[:, _S[StyleChoice.CONCISE]] = ~detailed
        return style

    def _gated_tools(self, frame: LogFrame, p_tool: np.ndarray) -> np.ndarray:
        tool = np.zeros((len(frame), len(TOOLS)))
        tool[:, _T[ToolChoice.NONE]] = 1.0 - p_tool
        cite = frame.has_citation
        tool[:, _T[ToolChoice.SEARCH]] = p_tool * cite
        tool[:, _T[ToolChoice.CODE]] = p_tool * ~cite
        return tool

    def head_probs(self, frame: LogFrame) -> tuple[np.ndarray, np.ndarray]:
        """Unsmoothed per-head distributions, shapes (N, 4) and (N, 2)."""
        n = len(frame)
        if self.name is PolicyName.CUSTOM:
            key = np.full(n, "", dtype=object)
            for j, feat in enumerate(self.custom_keys):
                part = _discretize(frame, feat, self.gate_turns).astype(object)
                key = part if j == 0 else key + "|" + part

            def lookup(table, k):
                rows = [table.get(kk, table["default"]) for kk in key] if self.custom_keys else [table["default"]] * n
                return np.asarray(rows, dtype=float).reshape(n, k)

            return lookup(self.custom_tool, 4), lookup(self.custom_style, 2)

        style = self._style_rule(frame)
        if self.name is PolicyName.NO_TOOL:
            tool = np.zeros((n, len(TOOLS)))
            tool[:, _T[ToolChoice.NONE]] = 1.0
        elif self.name is PolicyName.ALWAYS_TOOL:
            tool = np.zeros((n, len(TOOLS)))
            tool[:, 1:] = self.tool_mix
        else:
            p_tool = self._gate(frame).astype(float)
            if self.name is PolicyName.PERSONALIZED_WEIGHTS:
                shift = np.where(frame.literacy_high, self.literacy_shift, -self.literacy_shift)
                p_tool = np.clip(p_tool + shift, 0.0, 1.0)
            tool = self._gated_tools(frame, p_tool)
        return tool, style

    def eval_probs(self, frame: LogFrame) -> tuple[np.ndarray, np.ndarray]:
        """Distributions used for importance ratios and outcome-model plug-ins.

        Rule-based heads are mixed with a uniform floor of ``eps``. NoTool's
        tool head stays exact (zero weight on logged tool turns is the
        counterfactual), as does AlwaysTool's (no mass on None). Custom
        tables are taken as given.
        """
        tool, style = self.head_probs(frame)
        if self.name is PolicyName.CUSTOM:
            return tool, style
        style = floor_mix(style, self.eps)
        if self.name in (PolicyName.HEURISTIC_GATED, PolicyName.PERSONALIZED_WEIGHTS):
            tool = floor_mix(tool, self.eps)
        return tool, style


@dataclass(frozen=True)
class BehaviorPolicy:
    """Uses the reconstructed logging propensities as the target policy."""

    tool_model: HeadPropensityModel
    style_model: HeadPropensityModel
    label: str = "Behavior"

    @property
    def display_name(self) -> str:
        return self.label

    def head_probs(self, frame: LogFrame):
        return self.tool_model.probs, self.style_model.probs

    eval_probs = head_probs

    def to_dict(self) -> dict:
        return {"name": self.label}


def always_tool_from_log(data: Union[LogFrame, Sequence[Session]], **kwargs) -> PolicySpec:
    """AlwaysTool with the tool-type mix observed on tool-invoking turns."""
    frame = data if isinstance(data, LogFrame) else build_frame(list(data))
    counts = np.bincount(frame.tool, minlength=len(TOOLS))[1:].astype(float)
    if counts.sum() == 0:
        raise ContractError("log has no tool-invoking turns; AlwaysTool mix undefined")
    mix = counts / counts.sum()
    return PolicySpec(PolicyName.ALWAYS_TOOL, tool_mix=tuple(float(x) for x in mix), **kwargs)


def standard_policies(data: Union[LogFrame, Sequence[Session]], **kwargs) -> list[PolicySpec]:
    return [
        PolicySpec(PolicyName.NO_TOOL, **kwargs),
        always_tool_from_log(data, **kwargs),
        PolicySpec(PolicyName.HEURISTIC_GATED, **kwargs),
        PolicySpec(PolicyName.PERSONALIZED_WEIGHTS, **kwargs),
    ]


def policy_probs(spec: PolicySpec, x: FeatureVector) -> tuple[np.ndarray, np.ndarray]:
    """Per-head distributions for a single context."""
    frame = _single_row_frame(x)
    tool, style = spec.head_probs(frame)
    return tool[0], style[0]


def _single_row_frame(x: FeatureVector) -> LogFrame:
    one = lambda v, dt: np.array([v], dtype=dt)  # noqa: E731
    return LogFrame(
        session_ids=("_",),
        session=one(0, int),
        user_ids=one("_", object),
        turn_index=one(x.turn_index, int),
        latency=one(x.latency_seconds, float),
        chars=one(x.response_chars, int),
        has_citation=one(x.has_citation, bool),
        has_structure=one(x.has_structure, bool),
        asked_explain=one(x.user_asked_explain, bool),
        literacy_high=one(x.literacy_high, bool),
        efficacy_high=one(x.efficacy_high, bool),
        prev_outcome=one(x.prev_outcome, int),
        tool=one(0, int),
        style=one(0, int),
        outcome=one(0, int),
        rating=one(np.nan, float),
        rated=one(False, bool),
        r_tool=one(0.0, float),
        r_eng=one(0.0, float),
    )


@dataclass(frozen=True)
class ImportanceRatio:
    raw: float
    clipped: float
    clip_hit: bool


def clip_ratio(raw: float, c: float = DEFAULT_CLIP) -> ImportanceRatio:
    if c <= 0:
        raise ContractError("clip must be > 0")
    if raw < 0:
        raise ContractError("importance ratio must be nonnegative")
    return ImportanceRatio(raw=raw, clipped=min(raw, c), clip_hit=raw > c)


@dataclass
class Ratios:
    """Vectorized importance ratios over a frame."""

    raw: np.ndarray
    clipped: np.ndarray
    clip_hit: np.ndarray
    c: float

    @classmethod
    def from_raw(cls, raw: np.ndarray, c: float = DEFAULT_CLIP) -> "Ratios":
        if c <= 0:
            raise ContractError("clip must be > 0")
        raw = np.asarray(raw, dtype=float)
        if (raw < 0).any():
            raise ContractError("importance ratios must be nonnegative")
        return cls(raw=raw, clipped=np.minimum(raw, c), clip_hit=raw > c, c=c)

    def take(self, idx: np.ndarray) -> "Ratios":
        return Ratios(self.raw[idx], self.clipped[idx], self.clip_hit[idx], self.c)

    def __getitem__(self, i: int) -> ImportanceRatio:
        return ImportanceRatio(float(self.raw[i]), float(self.clipped[i]), bool(self.clip_hit[i]))


def importance_ratios(
    target,
    behavior: tuple[HeadPropensityModel, HeadPropensityModel],
    frame: LogFrame,
    c: float = DEFAULT_CLIP,
) -> Ratios:
    """Product over heads of target / behavior probability of the logged action."""
    tool_model, style_model = behavior
    if c <= 0:
        raise ContractError("clip must be > 0")
    b_tool = tool_model.prob_of(frame.tool)
    b_style = style_model.prob_of(frame.style)
    floor = min(tool_model.eps, style_model.eps) - 1e-12
    if (b_tool < floor).any() or (b_style < floor).any():
        raise ContractError("behavior propensity below floor")
    t_tool, t_style = target.eval_probs(frame)
    rows = np.arange(len(frame))
    raw = (t_tool[rows, frame.tool] / b_tool) * (t_style[rows, frame.style] / b_style)
    return Ratios.from_raw(raw, c)


def importance_ratio(
    target,
    behavior: tuple[HeadPropensityModel, HeadPropensityModel],
    frame: LogFrame,
    i: int,
    c: float = DEFAULT_CLIP,
) -> ImportanceRatio:
    """Single-turn form of :func:`importance_ratios` for turn ``i`` of ``frame``."""
    tool_model, style_model = behavior
    b = tool_model.probs[i, frame.tool[i]] * style_model.probs[i, frame.style[i]]
    if min(tool_model.probs[i, frame.tool[i]], style_model.probs[i, frame.style[i]]) < (
        min(tool_model.eps, style_model.eps) - 1e-12
    ):
        raise ContractError("behavior propensity below floor")
    t_tool, t_style = target.eval_probs(frame.take(np.array([i])))
    return clip_ratio(float(t_tool[0, frame.tool[i]] * t_style[0, frame.style[i]] / b), c)
