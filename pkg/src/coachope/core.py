"""Domain types for logged coaching sessions and the JSONL log format."""

from __future__ import annotations

import enum
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Union


class CoachError(Exception):
    """Base class for all library errors."""


class ParseError(CoachError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(CoachError):
    def __init__(self, session_id: str, message: str):
        super().__init__(f"session {session_id!r}: {message}")
        self.session_id = session_id


class ContractError(CoachError):
    """A precondition of an operation was violated by the caller."""


class EstimationError(CoachError):
    """An estimate is undefined on the given data (never imputed)."""


class ToolChoice(enum.Enum):
    NONE = "none"
    SEARCH = "search"
    CODE = "code"
    EMAIL = "email"


class StyleChoice(enum.Enum):
    CONCISE = "concise"
    DETAILED = "detailed"


class ToolOutcome(enum.Enum):
    NOT_INVOKED = "not_invoked"
    SUCCESS = "success"
    FAILURE = "failure"

    @property
    def signed(self) -> int:
        """-1 / 0 / +1 encoding used as a feature."""
        return {"not_invoked": 0, "success": 1, "failure": -1}[self.value]


class Level(enum.Enum):
    LOW = "low"
    HIGH = "high"


TOOLS: tuple[ToolChoice, ...] = tuple(ToolChoice)
STYLES: tuple[StyleChoice, ...] = tuple(StyleChoice)


@dataclass(frozen=True)
class ActionPair:
    tool: ToolChoice
    style: StyleChoice

    @property
    def index(self) -> int:
        """Position in the 8-cell joint action space (tool-major)."""
        return TOOLS.index(self.tool) * len(STYLES) + STYLES.index(self.style)

    @classmethod
    def from_index(cls, i: int) -> "ActionPair":
        return cls(TOOLS[i // len(STYLES)], STYLES[i % len(STYLES)])


JOINT_ACTIONS: tuple[ActionPair, ...] = tuple(ActionPair(t, s) for t in TOOLS for s in STYLES)


class Archetype(enum.Enum):
    """Literacy x efficacy cell; order matches posterior vectors everywhere."""

    LH_EH = (Level.HIGH, Level.HIGH)
    LH_EL = (Level.HIGH, Level.LOW)
    LL_EL = (Level.LOW, Level.LOW)
    LL_EH = (Level.LOW, Level.HIGH)

    @property
    def literacy(self) -> Level:
        return self.value[0]

    @property
    def efficacy(self) -> Level:
        return self.value[1]

    @property
    def label(self) -> str:
        return f"L_{self.literacy.value}xE_{self.efficacy.value}"

    @classmethod
    def of(cls, literacy: Level, efficacy: Level) -> "Archetype":
        return cls((literacy, efficacy))


ARCHETYPES: tuple[Archetype, ...] = tuple(Archetype)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    literacy: Level
    efficacy: Level

    @property
    def archetype(self) -> Archetype:
        return Archetype.of(self.literacy, self.efficacy)


@dataclass(frozen=True)
class TurnFeatures:
    turn_index: int
    latency_seconds: float
    response_chars: int
    has_citation: bool
    has_structure: bool
    user_asked_explain: bool

    def __post_init__(self):
        if self.turn_index < 1:
            raise ContractError(f"turn_index must be >= 1, got {self.turn_index}")
        if self.latency_seconds < 0:
            raise ContractError("latency_seconds must be nonnegative")
        if self.response_chars < 0:
            raise ContractError("response_chars must be nonnegative")


@dataclass(frozen=True)
class LoggedTurn:
    session_id: str
    features: TurnFeatures
    action: ActionPair
    outcome: ToolOutcome
    rating: Optional[int] = None

    def __post_init__(self):
        if self.rating is not None and self.rating not in (1, 2, 3, 4, 5):
            raise ValidationError(self.session_id, f"rating out of range: {self.rating}")
        if (self.action.tool is ToolChoice.NONE) != (self.outcome is ToolOutcome.NOT_INVOKED):
            raise ValidationError(
                self.session_id,
                f"tool outcome {self.outcome.value} inconsistent with tool {self.action.tool.value}",
            )

    @property
    def rated(self) -> bool:
        return self.rating is not None


@dataclass(frozen=True)
class Session:
    session_id: str
    user: UserProfile
    turns: tuple[LoggedTurn, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.turns:
            raise ValidationError(self.session_id, "session has no turns")
        for turn in self.turns:
            if turn.session_id != self.session_id:
                raise ValidationError(self.session_id, f"turn belongs to {turn.session_id!r}")

    def check_contiguous(self) -> None:
        idx = [t.features.turn_index for t in self.turns]
        if idx != list(range(1, len(idx) + 1)):
            raise ValidationError(self.session_id, f"turn_index not contiguous from 1: {idx}")

    @property
    def n_rated(self) -> int:
        return sum(t.rated for t in self.turns)


@dataclass(frozen=True)
class ValidationReport:
    n_sessions: int
    n_turns: int
    n_rated: int
    rating_rate: float
    turn_index_conflicts: int
    conflicting_sessions: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "n_turns": self.n_turns,
            "n_rated": self.n_rated,
            "rating_rate": self.rating_rate,
            "turn_index_conflicts": self.turn_index_conflicts,
            "conflicting_sessions": list(self.conflicting_sessions),
        }


_REQUIRED = {
    "session_id": str,
    "user_id": str,
    "literacy": str,
    "efficacy": str,
    "turn_index": int,
    "latency_seconds": (int, float),
    "response_chars": int,
    "has_citation": bool,
    "has_structure": bool,
    "user_asked_explain": bool,
    "tool": str,
    "style": str,
    "tool_outcome": str,
}


def _enum(kind, value, line_no, name):
    try:
        return kind(value)
    except ValueError:
        allowed = "|".join(m.value for m in kind)
        raise ParseError(line_no, f"unknown {name} {value!r} (expected {allowed})") from None


def _parse_record(rec: dict, line_no: int) -> tuple[UserProfile, LoggedTurn]:
    for name, kind in _REQUIRED.items():
        if name not in rec:
            raise ParseError(line_no, f"missing field {name!r}")
        value = rec[name]
        # bool is an int subclass; keep the two apart
        if kind is int and isinstance(value, bool) or not isinstance(value, kind):
            raise ParseError(line_no, f"field {name!r} has wrong type {type(value).__name__}")
        if kind == (int, float) and isinstance(value, bool):
            raise ParseError(line_no, f"field {name!r} has wrong type bool")
    rating = rec.get("rating")
    if rating is not None and (isinstance(rating, bool) or not isinstance(rating, int)):
        raise ParseError(line_no, "field 'rating' must be an integer")
    user = UserProfile(
        rec["user_id"],
        _enum(Level, rec["literacy"], line_no, "literacy"),
        _enum(Level, rec["efficacy"], line_no, "efficacy"),
    )
    try:
        features = TurnFeatures(
            turn_index=rec["turn_index"],
            latency_seconds=float(rec["latency_seconds"]),
            response_chars=rec["response_chars"],
            has_citation=rec["has_citation"],
            has_structure=rec["has_structure"],
            user_asked_explain=rec["user_asked_explain"],
        )
    except ContractError as exc:
        raise ValidationError(rec["session_id"], str(exc)) from None
    turn = LoggedTurn(
        session_id=rec["session_id"],
        features=features,
        action=ActionPair(
            _enum(ToolChoice, rec["tool"], line_no, "tool"),
            _enum(StyleChoice, rec["style"], line_no, "style"),
        ),
        outcome=_enum(ToolOutcome, rec["tool_outcome"], line_no, "tool_outcome"),
        rating=rating,
    )
    return user, turn


def parse_log(stream: Union[IO[str], IO[bytes], str, bytes, Iterable[str]]) -> list[Session]:
    """Parse newline-delimited JSON turn records into validated sessions.

    Sessions come back sorted by ``session_id`` with turns sorted by
    ``turn_index``, so the result does not depend on record order.
    Blank lines are skipped.
    """
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    users: dict[str, UserProfile] = {}
    turns: dict[str, list[LoggedTurn]] = defaultdict(list)
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        raw = raw.strip()
        if not raw:
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise ParseError(line_no, "record is not a JSON object")
        user, turn = _parse_record(rec, line_no)
        sid = turn.session_id
        if sid in users and users[sid] != user:
            raise ValidationError(sid, "conflicting user profile within session")
        users[sid] = user
        turns[sid].append(turn)

    sessions = []
    for sid in sorted(turns):
        ordered = tuple(sorted(turns[sid], key=lambda t: t.features.turn_index))
        session = Session(sid, users[sid], ordered)
        session.check_contiguous()
        sessions.append(session)
    return sessions


def turn_record(session: Session, turn: LoggedTurn) -> dict:
    f = turn.features
    rec = {
        "session_id": session.session_id,
        "user_id": session.user.user_id,
        "literacy": session.user.literacy.value,
        "efficacy": session.user.efficacy.value,
        "turn_index": f.turn_index,
        "latency_seconds": f.latency_seconds,
        "response_chars": f.response_chars,
        "has_citation": f.has_citation,
        "has_structure": f.has_structure,
        "user_asked_explain": f.user_asked_explain,
        "tool": turn.action.tool.value,
        "style": turn.action.style.value,
        "tool_outcome": turn.outcome.value,
    }
    if turn.rating is not None:
        rec["rating"] = turn.rating
    return rec


def serialize_log(sessions: Iterable[Session]) -> str:
    lines = [
        json.dumps(turn_record(s, t), sort_keys=True, separators=(",", ":"))
        for s in sessions
        for t in s.turns
    ]
    return "".join(line + "\n" for line in lines)


def validate_sessions(sessions: Iterable[Session]) -> ValidationReport:
    """Summarize data quality. Never raises.

    A conflict is counted once per session whose turn indices are not
    exactly ``1..n``.
    """
    sessions = list(sessions)
    n_turns = sum(len(s.turns) for s in sessions)
    n_rated = sum(s.n_rated for s in sessions)
    bad = []
    for s in sessions:
        idx = [t.features.turn_index for t in s.turns]
        if sorted(idx) != list(range(1, len(idx) + 1)):
            bad.append(s.session_id)
    return ValidationReport(
        n_sessions=len(sessions),
        n_turns=n_turns,
        n_rated=n_rated,
        rating_rate=n_rated / n_turns if n_turns else 0.0,
        turn_index_conflicts=len(bad),
        conflicting_sessions=tuple(bad),
    )
