import json

import pytest

from coachope.core import (
    ActionPair,
    Level,
    LoggedTurn,
    Session,
    StyleChoice,
    ToolChoice,
    ToolOutcome,
    TurnFeatures,
    UserProfile,
)
from coachope.simulator.synthetic import default_spec, generate_synthetic_bandit_log, pilot_like_spec


def record(session_id="s1", turn_index=1, **overrides):
    rec = {
        "session_id": session_id,
        "user_id": "u1",
        "literacy": "low",
        "efficacy": "high",
        "turn_index": turn_index,
        "latency_seconds": 12.5,
        "response_chars": 640,
        "has_citation": False,
        "has_structure": True,
        "user_asked_explain": False,
        "tool": "none",
        "style": "concise",
        "tool_outcome": "not_invoked",
        "rating": 5,
    }
    rec.update(overrides)
    return {k: v for k, v in rec.items() if v is not None}


def lines(*records):
    return "".join(json.dumps(r) + "\n" for r in records)


def make_turn(session_id, t, tool=ToolChoice.NONE, style=StyleChoice.CONCISE, outcome=None,
              rating=4, latency=10.0, citation=False, structure=False, explain=False):
    if outcome is None:
        outcome = ToolOutcome.NOT_INVOKED if tool is ToolChoice.NONE else ToolOutcome.SUCCESS
    return LoggedTurn(
        session_id,
        TurnFeatures(t, latency, 500, citation, structure, explain),
        ActionPair(tool, style),
        outcome,
        rating,
    )


def make_session(session_id, turns, user_id=None, literacy=Level.LOW, efficacy=Level.HIGH):
    user = UserProfile(user_id or f"u-{session_id}", literacy, efficacy)
    return Session(session_id, user, tuple(turns))


@pytest.fixture(scope="session")
def pilot_log():
    return generate_synthetic_bandit_log(pilot_like_spec(), seed=11, policies=[])


@pytest.fixture(scope="session")
def medium_log():
    return generate_synthetic_bandit_log(default_spec(n_sessions=1000), seed=3)


# -- acceptance summary: one line per criterion ------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_c" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        _ACCEPTANCE[report.nodeid] = (props.get("criterion", report.nodeid), report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in sorted(_ACCEPTANCE.values()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
