"""Per-turn columnar view of sessions and the numeric context encoding."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .core import (
    ARCHETYPES,
    STYLES,
    TOOLS,
    Archetype,
    Level,
    Session,
)
from .rewards import engagement_reward, tool_reward

FEATURE_NAMES = (
    "turn_index",
    "latency_z",
    "chars_z",
    "has_citation",
    "has_structure",
    "user_asked_explain",
    "literacy_high",
    "efficacy_high",
    "prev_outcome",
)


@dataclass(frozen=True)
class FeatureVector:
    """Context of a single turn: the raw observables plus their encoding."""

    turn_index: int
    latency_seconds: float
    response_chars: int
    has_citation: bool
    has_structure: bool
    user_asked_explain: bool
    literacy_high: bool
    efficacy_high: bool
    prev_outcome: int

    def encode(self, scaler: "Standardizer") -> np.ndarray:
        return np.array(
            [
                self.turn_index,
                (self.latency_seconds - scaler.latency_mean) / scaler.latency_std,
                (self.response_chars - scaler.chars_mean) / scaler.chars_std,
                self.has_citation,
                self.has_structure,
                self.user_asked_explain,
                self.literacy_high,
                self.efficacy_high,
                self.prev_outcome,
            ],
            dtype=float,
        )


@dataclass(frozen=True)
class Standardizer:
    latency_mean: float = 0.0
    latency_std: float = 1.0
    chars_mean: float = 0.0
    chars_std: float = 1.0

    @classmethod
    def fit(cls, latency: np.ndarray, chars: np.ndarray) -> "Standardizer":
        def stats(x):
            sd = float(np.std(x)) if len(x) else 1.0
            return (float(np.mean(x)) if len(x) else 0.0), (sd if sd > 0 else 1.0)

        lm, ls = stats(latency)
        cm, cs = stats(chars)
        return cls(lm, ls, cm, cs)


@dataclass
class LogFrame:
    """Column arrays for every logged turn, in session-then-turn order.

    ``session`` holds the integer position of each turn's session in
    ``session_ids``; bootstrap resampling works on those positions.
    """

    session_ids: tuple[str, ...]
    session: np.ndarray
    user_ids: np.ndarray
    turn_index: np.ndarray
    latency: np.ndarray
    chars: np.ndarray
    has_citation: np.ndarray
    has_structure: np.ndarray
    asked_explain: np.ndarray
    literacy_high: np.ndarray
    efficacy_high: np.ndarray
    prev_outcome: np.ndarray
    tool: np.ndarray
    style: np.ndarray
    outcome: np.ndarray
    rating: np.ndarray
    rated: np.ndarray
    r_tool: np.ndarray
    r_eng: np.ndarray

    def __len__(self) -> int:
        return len(self.session)

    @property
    def n_sessions(self) -> int:
        return len(self.session_ids)

    @property
    def archetype(self) -> np.ndarray:
        """Archetype index per turn (``core.ARCHETYPES`` order)."""
        table = np.empty((2, 2), dtype=int)
        for i, a in enumerate(ARCHETYPES):
            table[int(a.literacy is Level.HIGH), int(a.efficacy is Level.HIGH)] = i
        return table[self.literacy_high.astype(int), self.efficacy_high.astype(int)]

    @property
    def joint_action(self) -> np.ndarray:
        return self.tool * len(STYLES) + self.style

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(
            turn_index=int(self.turn_index[i]),
            latency_seconds=float(self.latency[i]),
            response_chars=int(self.chars[i]),
            has_citation=bool(self.has_citation[i]),
            has_structure=bool(self.has_structure[i]),
            user_asked_explain=bool(self.asked_explain[i]),
            literacy_high=bool(self.literacy_high[i]),
            efficacy_high=bool(self.efficacy_high[i]),
            prev_outcome=int(self.prev_outcome[i]),
        )

    def design_matrix(self, scaler: Standardizer) -> np.ndarray:
        return np.column_stack(
            [
                self.turn_index.astype(float),
                (self.latency - scaler.latency_mean) / scaler.latency_std,
                (self.chars - scaler.chars_mean) / scaler.chars_std,
                self.has_citation,
                self.has_structure,
                self.asked_explain,
                self.literacy_high,
                self.efficacy_high,
                self.prev_outcome,
            ]
        ).astype(float)

    def take(self, idx: np.ndarray) -> "LogFrame":
        cols = {
            f.name: getattr(self, f.name)[idx]
            for f in fields(self)
            if f.name != "session_ids"
        }
        return LogFrame(session_ids=self.session_ids, **cols)

    def session_rows(self) -> list[np.ndarray]:
        order = np.argsort(self.session, kind="stable")
        bounds = np.searchsorted(self.session[order], np.arange(self.n_sessions + 1))
        return [order[bounds[k]:bounds[k + 1]] for k in range(self.n_sessions)]


def build_frame(sessions: Sequence[Session]) -> LogFrame:
    cols: dict[str, list] = {f.name: [] for f in fields(LogFrame) if f.name != "session_ids"}
    for k, s in enumerate(sessions):
        prev = 0
        for turn in s.turns:
            f = turn.features
            cols["session"].append(k)
            cols["user_ids"].append(s.user.user_id)
            cols["turn_index"].append(f.turn_index)
            cols["latency"].append(f.latency_seconds)
            cols["chars"].append(f.response_chars)
            cols["has_citation"].append(f.has_citation)
            cols["has_structure"].append(f.has_structure)
            cols["asked_explain"].append(f.user_asked_explain)
            cols["literacy_high"].append(s.user.literacy is Level.HIGH)
            cols["efficacy_high"].append(s.user.efficacy is Level.HIGH)
            cols["prev_outcome"].append(prev)
            cols["tool"].append(TOOLS.index(turn.action.tool))
            cols["style"].append(STYLES.index(turn.action.style))
            cols["outcome"].append(turn.outcome.signed)
            cols["rating"].append(np.nan if turn.rating is None else float(turn.rating))
            cols["rated"].append(turn.rated)
            cols["r_tool"].append(tool_reward(turn.action.tool, turn.outcome))
            cols["r_eng"].append(engagement_reward(f, turn.action.tool))
            prev = turn.outcome.signed
    dtypes = {
        "session": int, "turn_index": int, "chars": int, "prev_outcome": int,
        "tool": int, "style": int, "outcome": int,
        "has_citation": bool, "has_structure": bool, "asked_explain": bool,
        "literacy_high": bool, "efficacy_high": bool, "rated": bool,
        "user_ids": object,
    }
    arrays = {k: np.asarray(v, dtype=dtypes.get(k, float)) for k, v in cols.items()}
    return LogFrame(session_ids=tuple(s.session_id for s in sessions), **arrays)


def archetype_of(literacy_high: bool, efficacy_high: bool) -> Archetype:
    return Archetype.of(
        Level.HIGH if literacy_high else Level.LOW,
        Level.HIGH if efficacy_high else Level.LOW,
    )
