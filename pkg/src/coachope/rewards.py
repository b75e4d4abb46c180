"""Typed per-turn reward signals and the early-turn curiosity bonus."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ARCHETYPES, ContractError, Level, ToolChoice, ToolOutcome, TurnFeatures

LATENCY_SCALE = 30.0
LATENCY_CAP = 1.5
ENG_WEIGHT = 0.2
ENG_BOUND = 0.5


@dataclass(frozen=True)
class RewardComponents:
    r_user: float
    r_tool: float
    r_eng: float


@dataclass(frozen=True)
class WeightTriple:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ContractError("reward weights must be nonnegative")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)


LOW_LITERACY = WeightTriple(0.6, 0.2, 0.2)
HIGH_LITERACY = WeightTriple(0.3, 0.5, 0.2)
DEFAULT_WEIGHTS = {Level.LOW: LOW_LITERACY, Level.HIGH: HIGH_LITERACY}


def weights_for(literacy: Level, presets: Optional[dict] = None) -> WeightTriple:
    return (presets or DEFAULT_WEIGHTS)[literacy]


def tool_reward(tool: ToolChoice, outcome: ToolOutcome) -> float:
    """Rubric value: 0 when no tool ran, otherwise +1 on success and -1 on failure."""
    if (tool is ToolChoice.NONE) != (outcome is ToolOutcome.NOT_INVOKED):
        raise ContractError(f"outcome {outcome.value} inconsistent with tool {tool.value}")
    if outcome is ToolOutcome.NOT_INVOKED:
        return 0.0
    return 1.0 if outcome is ToolOutcome.SUCCESS else -1.0


def engagement_reward(features: TurnFeatures, tool: ToolChoice = ToolChoice.NONE) -> float:
    """Bounded engagement signal.

    ``-0.2*min(latency/30, 1.5) + 0.2*structure + 0.2*(citation and tool is Search)``,
    clamped to [-0.5, 0.5]. The citation bonus is gated on an evidence tool.
    """
    latency_term = min(features.latency_seconds / LATENCY_SCALE, LATENCY_CAP)
    value = -ENG_WEIGHT * latency_term
    value += ENG_WEIGHT * features.has_structure
    value += ENG_WEIGHT * (features.has_citation and tool is ToolChoice.SEARCH)
    return float(min(max(value, -ENG_BOUND), ENG_BOUND))


def compose_reward(weights: WeightTriple, components: RewardComponents) -> float:
    return (
        weights.alpha * components.r_user
        + weights.beta * components.r_tool
        + weights.gamma * components.r_eng
    )


@dataclass(frozen=True)
class ArchetypePosterior:
    """Distribution over the four archetypes, in ``core.ARCHETYPES`` order."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = self.probs
        if len(p) != len(ARCHETYPES):
            raise ContractError(f"posterior needs {len(ARCHETYPES)} entries, got {len(p)}")
        if any(x < 0 or not math.isfinite(x) for x in p):
            raise ContractError("posterior entries must be finite and nonnegative")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ContractError(f"posterior sums to {sum(p)!r}, not 1")

    @classmethod
    def uniform(cls) -> "ArchetypePosterior":
        n = len(ARCHETYPES)
        return cls(tuple([1.0 / n] * n))

    @classmethod
    def point(cls, index: int) -> "ArchetypePosterior":
        return cls(tuple(1.0 if i == index else 0.0 for i in range(len(ARCHETYPES))))

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "ArchetypePosterior":
        return cls(tuple(float(x) for x in arr))

    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def entropy(self) -> float:
        return entropy_bits(self.probs)

    @property
    def max_prob(self) -> float:
        return max(self.probs)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.probs))


def entropy_bits(p: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def curiosity_bonus(prev: ArchetypePosterior, curr: ArchetypePosterior) -> float:
    return max(0.0, prev.entropy() - curr.entropy())


@dataclass(frozen=True)
class CuriositySchedule:
    lam: float = 0.1
    horizon_k: int = 2

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError("lambda must be >= 0")
        if self.horizon_k < 0:
            raise ContractError("horizon_k must be >= 0")

    def weight(self, t: int) -> float:
        if t < 1:
            raise ContractError(f"turn index must be >= 1, got {t}")
        return self.lam if t <= self.horizon_k else 0.0


def total_signal(r: float, t: int, schedule: CuriositySchedule, bonus: float) -> float:
    return r + schedule.weight(t) * bonus
