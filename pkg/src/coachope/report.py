"""End-to-end offline evaluation: fit nuisances once, estimate every policy,
bootstrap the chosen estimand and assemble a versioned JSON report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .behavior import PROPENSITY_FLOOR
from .core import EstimationError, Session, validate_sessions
from .features import build_frame
from .ope import (
    ESTIMANDS,
    ArchetypeDelta,
    DiagnosticsBlock,
    OpeContext,
    diagnostics,
    fit_context,
    session_bootstrap,
    slice_by_archetype,
)
from .policies import DEFAULT_CLIP, PolicyName, PolicySpec, always_tool_from_log, standard_policies

SCHEMA_VERSION = "coachope.ope-report/1"

BOOTSTRAP_CAVEAT = (
    "intervals resample sessions with the nuisance models held fixed, "
    "so they understate model-fitting variance"
)


@dataclass
class Interval:
    estimand: str
    low: Optional[float]
    high: Optional[float]
    level: float
    n_boot: int
    n_failed: int
    contains_point: Optional[bool] = None


@dataclass
class PolicyEstimate:
    policy: str
    spec: dict
    r_obj_snips: Optional[float] = None
    r_user_aipw: Optional[float] = None
    r_total: Optional[float] = None
    r_user_plain_ips: Optional[float] = None
    ci: Optional[Interval] = None
    diagnostics: Optional[DiagnosticsBlock] = None
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass
class OpeReport:
    config: dict
    seed: int
    n_sessions: int
    n_turns: int
    rating_rate: float
    estimates: list[PolicyEstimate]
    heterogeneity: dict
    behavior: dict
    notes: list[str]
    schema_version: str = SCHEMA_VERSION

    @property
    def failed(self) -> bool:
        return any(not e.ok for e in self.estimates)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def estimates_csv(self) -> str:
        cols = ["policy", "r_obj_snips", "r_user_aipw", "r_total", "ci_low", "ci_high", "clipping_rate", "ess"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for e in self.estimates:
            writer.writerow([
                e.policy, _fmt(e.r_obj_snips), _fmt(e.r_user_aipw), _fmt(e.r_total),
                _fmt(e.ci.low if e.ci else None), _fmt(e.ci.high if e.ci else None),
                _fmt(e.diagnostics.clipping_rate if e.diagnostics else None),
                _fmt(e.diagnostics.effective_sample_size if e.diagnostics else None),
            ])
        return buf.getvalue()

    def heterogeneity_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["archetype", "present", "n_turns", "delta_objective", "delta_satisfaction"])
        for row in self.heterogeneity["rows"]:
            writer.writerow([
                row["archetype"], row["present"], row["n_turns"],
                _fmt(row["delta_objective"]), _fmt(row["delta_satisfaction"]),
            ])
        return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _estimate(
    ctx: OpeContext,
    policy,
    reward: str,
    clip: float,
    n_boot: int,
    level: float,
    seed: int,
    workers: int,
) -> PolicyEstimate:
    out = PolicyEstimate(policy=policy.display_name, spec=policy.to_dict())
    pe = ctx.policy_eval(policy, clip)
    ratios = ctx.ratios(policy, clip)
    out.diagnostics = diagnostics(ratios, ctx.frame.rated, ctx)
    for name, attr in (("r_obj", "r_obj_snips"), ("r_user", "r_user_aipw"),
                       ("r_total", "r_total"), ("r_user_plain_ips", "r_user_plain_ips")):
        try:
            value = {
                "r_obj": pe.r_obj, "r_user": pe.r_user_aipw, "r_total": pe.r_total,
                "r_user_plain_ips": pe.plain_ips_user,
            }[name]()
            setattr(out, attr, float(value))
        except EstimationError as exc:
            if name != "r_user_plain_ips":
                out.errors.append(f"{name}: {exc}")
    if out.errors or n_boot == 0:
        return out
    boot = session_bootstrap(pe, ctx.frame.session, ESTIMANDS[reward], n_boot, level, seed, workers=workers)
    point = {"obj": out.r_obj_snips, "user": out.r_user_aipw, "total": out.r_total}[reward]
    out.ci = Interval(reward, boot.low, boot.high, level, boot.n_boot, boot.n_failed,
                      contains_point=bool(boot.low <= point <= boot.high))
    return out


def evaluate(
    sessions: Sequence[Session],
    policies: Optional[Sequence] = None,
    reward: str = "total",
    n_boot: int = 1000,
    clip: float = DEFAULT_CLIP,
    seed: int = 0,
    n_folds: Optional[int] = None,
    eps: float = PROPENSITY_FLOOR,
    user_reward: str = "zscore",
    level: float = 0.95,
    workers: int = 1,
    config: Optional[dict] = None,
) -> OpeReport:
    """Estimate each policy on ``sessions`` and compare AlwaysTool against NoTool by archetype.

    ``policies`` defaults to the four standard counterfactual policies.
    ``n_boot=0`` skips the bootstrap.
    """
    if reward not in ESTIMANDS:
        raise ValueError(f"reward must be one of {sorted(ESTIMANDS)}")
    sessions = list(sessions)
    frame = build_frame(sessions)
    ctx = fit_context(frame, n_folds=n_folds, eps=eps, user_reward=user_reward, seed=seed)
    policies = list(policies) if policies is not None else standard_policies(frame, eps=eps)
    estimates = [_estimate(ctx, p, reward, clip, n_boot, level, seed, workers) for p in policies]

    always = next((p for p in policies if getattr(p, "name", None) is PolicyName.ALWAYS_TOOL), None)
    always = always or always_tool_from_log(frame, eps=eps)
    never = PolicySpec(PolicyName.NO_TOOL, eps=eps)
    rows: list[ArchetypeDelta] = slice_by_archetype(ctx.policy_eval(always, clip), ctx.policy_eval(never, clip))

    report_cfg = {
        "reward": reward, "n_boot": n_boot, "clip": clip, "folds": n_folds, "eps": eps,
        "user_reward": user_reward, "level": level,
    }
    if config:
        report_cfg.update(config)
    notes = [BOOTSTRAP_CAVEAT, "r_obj and r_total are on their native scales and do not sum"]
    if ctx.zscore_flagged:
        notes.append(f"{len(ctx.zscore_flagged)} user(s) had too few or constant ratings; z-score set to 0")
    validation = validate_sessions(sessions)
    return OpeReport(
        config=report_cfg,
        seed=seed,
        n_sessions=frame.n_sessions,
        n_turns=len(frame),
        rating_rate=validation.rating_rate,
        estimates=estimates,
        heterogeneity={
            "policy_a": always.display_name,
            "policy_b": never.display_name,
            "rows": [asdict(r) for r in rows],
        },
        behavior={
            "ece_tool": estimates[0].diagnostics.ece_tool if estimates else None,
            "ece_style": estimates[0].diagnostics.ece_style if estimates else None,
            "rating_auc": ctx.rating_model.auc,
            "rating_no_selection": ctx.rating_model.no_selection,
            "zscore_flagged_users": list(ctx.zscore_flagged),
        },
        notes=notes,
    )
