"""SNIPS and AIPW estimators, literacy-weighted composition, session
bootstrap, per-archetype slicing and OPE diagnostics."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.linear_model import Ridge

from .behavior import (
    PROPENSITY_FLOOR,
    HeadPropensityModel,
    RatingPropensityModel,
    default_n_folds,
    fit_head_model,
    fit_rating_propensity,
    multiclass_ece,
    session_folds,
)
from .core import ARCHETYPES, STYLES, TOOLS, ContractError, EstimationError, Level, Session
from .features import LogFrame, Standardizer, build_frame
from .policies import DEFAULT_CLIP, PolicySpec, Ratios, importance_ratios
from .rewards import DEFAULT_WEIGHTS
from .rng import substream

logger = logging.getLogger(__name__)

N_JOINT = len(TOOLS) * len(STYLES)


class BootstrapWarning(UserWarning):
    pass


# -- reward preparation ------------------------------------------------


def zscore_ratings(frame: LogFrame) -> tuple[np.ndarray, list[str]]:
    """Per-user z-scored ratings (NaN on unrated turns).

    Users with fewer than two rated turns, or constant ratings, get 0 and are
    returned in the flag list.
    """
    z = np.full(len(frame), np.nan)
    flagged = []
    for user in sorted(set(frame.user_ids)):
        rows = frame.user_ids == user
        rated = rows & frame.rated
        vals = frame.rating[rated]
        if len(vals) < 2 or np.std(vals) == 0:
            z[rated] = 0.0
            flagged.append(user)
        else:
            z[rated] = (vals - vals.mean()) / vals.std()
    return z, flagged


def literacy_weights(frame: LogFrame, presets: Optional[dict] = None) -> np.ndarray:
    """(N, 3) array of (alpha, beta, gamma) chosen by each turn's literacy stratum."""
    presets = presets or DEFAULT_WEIGHTS
    lo = np.array(presets[Level.LOW].as_tuple())
    hi = np.array(presets[Level.HIGH].as_tuple())
    return np.where(frame.literacy_high[:, None], hi, lo)


# -- outcome model ------------------------------------------------------


def _action_design(xs: np.ndarray, joint: np.ndarray) -> np.ndarray:
    tool = joint // len(STYLES)
    tool_onehot = np.stack([tool == k for k in range(1, len(TOOLS))], axis=1).astype(float)
    detailed = (joint % len(STYLES) == 1).astype(float)[:, None]
    acts = np.hstack([tool_onehot, detailed])
    inter = (xs[:, :, None] * acts[:, None, :]).reshape(len(xs), -1)
    return np.hstack([xs, acts, inter])


@dataclass
class OutcomeModel:
    """Cross-fitted regression of the user reward on context and action.

    ``q_all[i, j]`` predicts turn ``i``'s user reward under joint action ``j``
    (tool-major order) from a model fitted on rated turns of other folds.
    """

    q_all: np.ndarray
    turn_fold: Optional[np.ndarray] = None

    @classmethod
    def from_known(cls, q_all: np.ndarray) -> "OutcomeModel":
        q_all = np.asarray(q_all, dtype=float)
        if q_all.shape[1] != N_JOINT:
            raise ContractError(f"outcome table needs {N_JOINT} columns")
        return cls(q_all=q_all)

    def q_logged(self, frame: LogFrame) -> np.ndarray:
        return self.q_all[np.arange(len(frame)), frame.joint_action]

    def q_policy(self, tool_p: np.ndarray, style_p: np.ndarray) -> np.ndarray:
        joint = (tool_p[:, :, None] * style_p[:, None, :]).reshape(len(tool_p), -1)
        return (joint * self.q_all).sum(axis=1)


def fit_outcome_model(
    frame: LogFrame,
    r_user: np.ndarray,
    n_folds: Optional[int] = None,
    ridge: float = 1.0,
    seed: int = 0,
) -> OutcomeModel:
    n_folds = default_n_folds(frame.n_sessions) if n_folds is None else n_folds
    turn_fold = session_folds(frame.n_sessions, n_folds, seed)[frame.session]
    X = frame.design_matrix(Standardizer.fit(frame.latency, frame.chars))
    sd = X.std(axis=0)
    xs = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    phi_logged = _action_design(xs, frame.joint_action)
    phis = [_action_design(xs, np.full(len(frame), j)) for j in range(N_JOINT)]
    rated = frame.rated & np.isfinite(r_user)
    q_all = np.zeros((len(frame), N_JOINT))
    for f in range(n_folds):
        train = (turn_fold != f) & rated
        test = turn_fold == f
        if train.sum() == 0:
            continue
        model = Ridge(alpha=ridge).fit(phi_logged[train], r_user[train])
        for j in range(N_JOINT):
            q_all[test, j] = model.predict(phis[j][test])
    return OutcomeModel(q_all=q_all, turn_fold=turn_fold)


# -- estimators ----------------------------------------------------------


def snips(ratios: np.ndarray, rewards: np.ndarray) -> float:
    """Self-normalized importance-weighted mean reward."""
    w = np.asarray(ratios, dtype=float)
    r = np.asarray(rewards, dtype=float)
    total = w.sum()
    if not total > 0:
        raise EstimationError("SNIPS undefined: all importance weights are zero")
    return float((w * r).sum() / total)


@dataclass
class AipwTerms:
    value: float
    rate_floor_hits: int


def aipw(
    q_pi: np.ndarray,
    q_a: np.ndarray,
    r_user: np.ndarray,
    rated: np.ndarray,
    p_rate: np.ndarray,
    ratios: np.ndarray,
    eps: float = PROPENSITY_FLOOR,
) -> AipwTerms:
    """Doubly-robust mean with rating-propensity weighting on observed turns."""
    n = len(q_pi)
    if n == 0:
        raise EstimationError("AIPW undefined on an empty set of turns")
    p = np.asarray(p_rate, dtype=float)
    hits = int((p < eps).sum())
    p = np.maximum(p, eps)
    m = np.asarray(rated, dtype=bool)
    resid = np.where(m, np.nan_to_num(np.asarray(r_user, dtype=float)) - q_a, 0.0)
    corr = np.where(m, np.asarray(ratios) * resid / p, 0.0)
    return AipwTerms(float((np.asarray(q_pi) + corr).sum() / n), hits)


@dataclass
class PolicyEval:
    """Per-turn estimator inputs for one target policy; rows can be resampled."""

    w: np.ndarray
    raw: np.ndarray
    clip_hit: np.ndarray
    q_pi: np.ndarray
    q_a: np.ndarray
    r_user: np.ndarray
    rated: np.ndarray
    p_rate: np.ndarray
    r_tool: np.ndarray
    r_eng: np.ndarray
    weights: np.ndarray
    archetype: np.ndarray
    eps: float = PROPENSITY_FLOOR

    def take(self, idx: np.ndarray) -> "PolicyEval":
        cols = {f.name: getattr(self, f.name) for f in fields(self)}
        return PolicyEval(**{k: (v[idx] if isinstance(v, np.ndarray) else v) for k, v in cols.items()})

    def __len__(self) -> int:
        return len(self.w)

    def r_obj(self) -> float:
        return snips(self.w, self.r_tool + self.r_eng)

    def r_user_aipw(self) -> float:
        return aipw(self.q_pi, self.q_a, self.r_user, self.rated, self.p_rate, self.w, self.eps).value

    def r_total(self) -> float:
        alpha, beta, gamma = self.weights.T
        obj = snips(self.w, beta * self.r_tool + gamma * self.r_eng)
        sat = aipw(
            alpha * self.q_pi, alpha * self.q_a, alpha * np.nan_to_num(self.r_user),
            self.rated, self.p_rate, self.w, self.eps,
        ).value
        return obj + sat

    def plain_ips_user(self) -> float:
        """Uncorrected satisfaction: SNIPS over rated turns only."""
        m = self.rated
        return snips(self.w[m], self.r_user[m])


ESTIMANDS: dict[str, Callable[[PolicyEval], float]] = {
    "obj": PolicyEval.r_obj,
    "user": PolicyEval.r_user_aipw,
    "total": PolicyEval.r_total,
}


@dataclass
class OpeContext:
    """A frame plus every fitted (or oracle) nuisance model it needs."""

    frame: LogFrame
    tool_model: HeadPropensityModel
    style_model: HeadPropensityModel
    rating_model: RatingPropensityModel
    outcome_model: OutcomeModel
    r_user: np.ndarray
    weights: np.ndarray
    zscore_flagged: list[str] = field(default_factory=list)

    @property
    def behavior(self) -> tuple[HeadPropensityModel, HeadPropensityModel]:
        return self.tool_model, self.style_model

    def ratios(self, policy, clip: float = DEFAULT_CLIP) -> Ratios:
        return importance_ratios(policy, self.behavior, self.frame, clip)

    def policy_eval(self, policy, clip: float = DEFAULT_CLIP) -> PolicyEval:
        ratios = self.ratios(policy, clip)
        tool_p, style_p = policy.eval_probs(self.frame)
        return PolicyEval(
            w=ratios.clipped,
            raw=ratios.raw,
            clip_hit=ratios.clip_hit,
            q_pi=self.outcome_model.q_policy(tool_p, style_p),
            q_a=self.outcome_model.q_logged(self.frame),
            r_user=np.nan_to_num(self.r_user),
            rated=self.frame.rated & np.isfinite(self.r_user),
            p_rate=self.rating_model.probs,
            r_tool=self.frame.r_tool,
            r_eng=self.frame.r_eng,
            weights=self.weights,
            archetype=self.frame.archetype,
            eps=self.rating_model.eps,
        )


def user_rewards(frame: LogFrame, mode: str = "zscore") -> tuple[np.ndarray, list[str]]:
    if mode == "zscore":
        return zscore_ratings(frame)
    if mode == "raw":
        return frame.rating.copy(), []
    raise ContractError(f"unknown user reward mode {mode!r}")


def fit_context(
    data,
    n_folds: Optional[int] = None,
    eps: float = PROPENSITY_FLOOR,
    user_reward: str = "zscore",
    weight_presets: Optional[dict] = None,
    seed: int = 0,
) -> OpeContext:
    frame = data if isinstance(data, LogFrame) else build_frame(list(data))
    n_folds = default_n_folds(frame.n_sessions) if n_folds is None else n_folds
    r_user, flagged = user_rewards(frame, user_reward)
    return OpeContext(
        frame=frame,
        tool_model=fit_head_model(frame, "tool", n_folds, eps=eps, seed=seed),
        style_model=fit_head_model(frame, "style", n_folds, eps=eps, seed=seed),
        rating_model=fit_rating_propensity(frame, n_folds, eps=eps, seed=seed),
        outcome_model=fit_outcome_model(frame, r_user, n_folds, seed=seed),
        r_user=r_user,
        weights=literacy_weights(frame, weight_presets),
        zscore_flagged=flagged,
    )


def aipw_user(ctx: OpeContext, target, ratios: Optional[Ratios] = None) -> float:
    """AIPW satisfaction estimate of ``target`` using the context's models."""
    pe = ctx.policy_eval(target)
    if ratios is not None:
        pe.w = ratios.clipped
    return pe.r_user_aipw()


def r_total(ctx: OpeContext, target, clip: float = DEFAULT_CLIP) -> float:
    return ctx.policy_eval(target, clip).r_total()


# -- bootstrap -------------------------------------------------------------


@dataclass
class BootstrapResult:
    low: float
    high: float
    n_boot: int
    n_failed: int
    level: float

    @property
    def width(self) -> float:
        return self.high - self.low


def bootstrap_ci(
    units: Sequence,
    estimator: Callable[[list], float],
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    workers: int = 1,
) -> BootstrapResult:
    """Percentile interval from resampling whole units (sessions) with replacement.

    ``estimator`` receives the resampled list of units. Replicate ``b`` draws
    from its own substream of ``seed`` so any replicate can be recomputed in
    isolation, and results do not depend on ``workers``. Replicates where
    the estimate is undefined are dropped and counted.
    """
    if n_boot < 100:
        raise ContractError(f"n_boot must be >= 100, got {n_boot}")
    if not 0 < level < 1:
        raise ContractError("level must lie in (0, 1)")
    n = len(units)
    if n == 0:
        raise ContractError("bootstrap needs at least one unit")

    def replicate(b: int) -> Optional[float]:
        pick = substream(seed, "bootstrap", b).integers(0, n, size=n)
        try:
            return estimator([units[i] for i in pick])
        except EstimationError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(replicate, range(n_boot)))
    else:
        results = [replicate(b) for b in range(n_boot)]
    stats = [r for r in results if r is not None]
    failed = n_boot - len(stats)
    if failed > 0.2 * n_boot:
        warnings.warn(
            f"estimate undefined on {failed}/{n_boot} bootstrap replicates; interval is unreliable",
            BootstrapWarning,
            stacklevel=2,
        )
    if not stats:
        raise EstimationError(f"estimate undefined on all {n_boot} bootstrap replicates")
    tail = (1 - level) / 2 * 100
    low, high = np.percentile(stats, [tail, 100 - tail])
    return BootstrapResult(float(low), float(high), n_boot, failed, level)


def session_bootstrap(
    pe: PolicyEval,
    session: np.ndarray,
    estimand: Callable[[PolicyEval], float],
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    workers: int = 1,
) -> BootstrapResult:
    """Bootstrap an estimand of ``pe`` over the sessions in ``session`` (row labels)."""
    labels = np.unique(session)
    rows = [np.flatnonzero(session == s) for s in labels]
    return bootstrap_ci(
        rows, lambda parts: estimand(pe.take(np.concatenate(parts))), n_boot, level, seed, workers
    )


# -- slicing and diagnostics ------------------------------------------------


@dataclass
class ArchetypeDelta:
    archetype: str
    present: bool
    n_turns: int = 0
    delta_objective: Optional[float] = None
    delta_satisfaction: Optional[float] = None
    note: Optional[str] = None


def slice_by_archetype(pe_a: PolicyEval, pe_b: PolicyEval) -> list[ArchetypeDelta]:
    """Per-archetype (a - b) differences of SNIPS objective and AIPW satisfaction."""
    out = []
    for k, arch in enumerate(ARCHETYPES):
        idx = np.flatnonzero(pe_a.archetype == k)
        if len(idx) == 0:
            out.append(ArchetypeDelta(arch.label, present=False))
            continue
        a, b = pe_a.take(idx), pe_b.take(idx)
        entry = ArchetypeDelta(arch.label, present=True, n_turns=len(idx))
        try:
            entry.delta_objective = a.r_obj() - b.r_obj()
        except EstimationError as exc:
            entry.note = str(exc)
        entry.delta_satisfaction = a.r_user_aipw() - b.r_user_aipw()
        out.append(entry)
    return out


@dataclass
class DiagnosticsBlock:
    n_turns: int
    clipping_rate: float
    n_clipped: int
    effective_sample_size: float
    max_raw_ratio: float
    rating_rate: float
    ece_tool: Optional[float] = None
    ece_style: Optional[float] = None
    rating_auc: Optional[float] = None
    rating_no_selection: Optional[bool] = None
    fold_sizes: Optional[list[int]] = None
    propensity_floor_hits: Optional[int] = None
    rate_floor_hits: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def effective_sample_size(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    denom = (w ** 2).sum()
    return float(w.sum() ** 2 / denom) if denom > 0 else 0.0


def diagnostics(
    ratios: Ratios,
    rated: np.ndarray,
    ctx: Optional[OpeContext] = None,
) -> DiagnosticsBlock:
    block = DiagnosticsBlock(
        n_turns=len(ratios.raw),
        clipping_rate=float(ratios.clip_hit.mean()) if len(ratios.raw) else 0.0,
        n_clipped=int(ratios.clip_hit.sum()),
        effective_sample_size=effective_sample_size(ratios.clipped),
        max_raw_ratio=float(ratios.raw.max()) if len(ratios.raw) else 0.0,
        rating_rate=float(np.mean(rated)) if len(rated) else 0.0,
    )
    if ctx is not None:
        f = ctx.frame
        block.ece_tool = multiclass_ece(ctx.tool_model.probs, f.tool)
        block.ece_style = multiclass_ece(ctx.style_model.probs, f.style)
        block.rating_auc = ctx.rating_model.auc
        block.rating_no_selection = ctx.rating_model.no_selection
        if ctx.tool_model.turn_fold is not None:
            block.fold_sizes = np.bincount(ctx.tool_model.turn_fold).tolist()
        block.propensity_floor_hits = ctx.tool_model.floor_hits + ctx.style_model.floor_hits
        block.rate_floor_hits = int((ctx.rating_model.probs <= ctx.rating_model.eps + 1e-12).sum())
    return block
