"""Logging-policy reconstruction per decision head, rating propensities,
and calibration/selection diagnostics (ECE, AUC)."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import rankdata
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .core import STYLES, TOOLS, ContractError, Session
from .features import LogFrame, Standardizer, build_frame

logger = logging.getLogger(__name__)

PROPENSITY_FLOOR = 0.01
HEADS = {"tool": len(TOOLS), "style": len(STYLES)}


class DegenerateModelWarning(UserWarning):
    pass


def floor_mix(p: np.ndarray, eps: float) -> np.ndarray:
    """Mix each row with the uniform floor so every entry is >= eps and rows sum to 1."""
    p = np.asarray(p, dtype=float)
    k = p.shape[-1]
    if eps * k > 1:
        raise ContractError(f"floor {eps} too large for {k} actions")
    p = p / p.sum(axis=-1, keepdims=True)
    return eps + (1.0 - k * eps) * p


def default_n_folds(n_sessions: int) -> int:
    return 3 if n_sessions < 10 else 5


def session_folds(n_sessions: int, n_folds: int, seed: int = 0) -> np.ndarray:
    """Fold id per session; sizes differ by at most one."""
    if n_folds < 2:
        raise ContractError("cross-fitting requires >=2 folds")
    if n_sessions < n_folds:
        raise ContractError(f"need at least {n_folds} sessions for {n_folds} folds, got {n_sessions}")
    perm = np.random.default_rng(seed).permutation(n_sessions)
    folds = np.empty(n_sessions, dtype=int)
    folds[perm] = np.arange(n_sessions) % n_folds
    return folds


def _as_frame(data: Union[LogFrame, Sequence[Session]]) -> LogFrame:
    return data if isinstance(data, LogFrame) else build_frame(list(data))


def _classifier(c: float):
    return make_pipeline(StandardScaler(), LogisticRegression(C=c, max_iter=2000))


def _predict_full(model, X: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(X), n_classes))
    out[:, model.classes_] = model.predict_proba(X)
    return out


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-6, 1 - 1e-6)
    return np.log(p) - np.log1p(-p)


@dataclass
class SigmoidCalibrator:
    """Per-class Platt maps ``sigmoid(a * logit(p) + b)`` followed by renormalization."""

    coefs: list[Optional[tuple[float, float]]]

    @classmethod
    def fit(cls, probs: np.ndarray, labels: np.ndarray) -> "SigmoidCalibrator":
        coefs: list[Optional[tuple[float, float]]] = []
        for k in range(probs.shape[1]):
            y = labels == k
            if y.all() or not y.any():
                coefs.append(None)
                continue
            lr = LogisticRegression(C=1e4, max_iter=1000)
            lr.fit(_logit(probs[:, k])[:, None], y)
            coefs.append((float(lr.coef_[0, 0]), float(lr.intercept_[0])))
        return cls(coefs)

    def transform(self, probs: np.ndarray) -> np.ndarray:
        out = probs.copy()
        for k, ab in enumerate(self.coefs):
            if ab is not None:
                a, b = ab
                out[:, k] = 1.0 / (1.0 + np.exp(-(a * _logit(probs[:, k]) + b)))
        total = out.sum(axis=1, keepdims=True)
        return np.where(total > 0, out / np.where(total > 0, total, 1.0), probs)


@dataclass
class HeadPropensityModel:
    """Cross-fitted, calibrated propensities for one decision head.

    ``probs[i]`` is the floored distribution over the head's actions for turn
    ``i`` of the frame the model was fitted on; it comes from the fold model
    that never saw turn ``i``'s session.
    """

    head: str
    probs: np.ndarray
    eps: float = PROPENSITY_FLOOR
    turn_fold: Optional[np.ndarray] = None
    train_sessions: list[np.ndarray] = field(default_factory=list)
    fold_models: list = field(default_factory=list)
    calibrators: list = field(default_factory=list)
    scaler: Optional[Standardizer] = None
    degenerate: bool = False
    raw_floor_hits: int = 0

    @classmethod
    def from_known(cls, head: str, probs: np.ndarray, eps: float = PROPENSITY_FLOOR) -> "HeadPropensityModel":
        """Pass-through for logs whose true propensities are known (synthetic oracle)."""
        probs = np.asarray(probs, dtype=float)
        if probs.shape[1] != HEADS[head]:
            raise ContractError(f"{head} head needs {HEADS[head]} columns")
        return cls(head=head, probs=probs, eps=eps)

    @property
    def n_classes(self) -> int:
        return HEADS[self.head]

    def prob_of(self, actions: np.ndarray) -> np.ndarray:
        return self.probs[np.arange(len(actions)), actions]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Propensities for new contexts: fold models and maps averaged."""
        if not self.fold_models:
            raise ContractError("model has no fitted folds (oracle or degenerate)")
        preds = [
            cal.transform(m(X) if callable(m) else _predict_full(m, X, self.n_classes))
            for m, cal in zip(self.fold_models, self.calibrators)
        ]
        return floor_mix(np.mean(preds, axis=0), self.eps)

    @property
    def floor_hits(self) -> int:
        return int((self.probs <= self.eps + 1e-12).sum())


def fit_head_model(
    data: Union[LogFrame, Sequence[Session]],
    head: str,
    n_folds: Optional[int] = None,
    eps: float = PROPENSITY_FLOOR,
    c: float = 1.0,
    seed: int = 0,
) -> HeadPropensityModel:
    if head not in HEADS:
        raise ContractError(f"unknown head {head!r}")
    frame = _as_frame(data)
    n_folds = default_n_folds(frame.n_sessions) if n_folds is None else n_folds
    folds = session_folds(frame.n_sessions, n_folds, seed)
    turn_fold = folds[frame.session]
    y = frame.tool if head == "tool" else frame.style
    k = HEADS[head]
    scaler = Standardizer.fit(frame.latency, frame.chars)
    X = frame.design_matrix(scaler)

    if len(np.unique(y)) == 1:
        warnings.warn(
            f"{head} head has a single observed action; propensities floored at {eps}",
            DegenerateModelWarning,
            stacklevel=2,
        )
        onehot = np.zeros((len(y), k))
        onehot[:, y[0]] = 1.0
        return HeadPropensityModel(
            head=head, probs=floor_mix(onehot, eps), eps=eps, turn_fold=turn_fold,
            train_sessions=[np.flatnonzero(folds != f) for f in range(n_folds)],
            scaler=scaler, degenerate=True,
        )

    raw = np.zeros((len(y), k))
    models, train_sessions = [], []
    for f in range(n_folds):
        train, test = turn_fold != f, turn_fold == f
        train_sessions.append(np.flatnonzero(folds != f))
        classes = np.unique(y[train])
        if len(classes) == 1:
            only = int(classes[0])

            def const(Z, only=only):
                out = np.zeros((len(Z), k))
                out[:, only] = 1.0
                return out

            model = const
            raw[test] = const(X[test])
        else:
            model = _classifier(c).fit(X[train], y[train])
            raw[test] = _predict_full(model, X[test], k)
        models.append(model)

    # calibration maps are cross-fitted too: fold f's map never sees fold f
    calibrated = np.zeros_like(raw)
    calibrators = []
    for f in range(n_folds):
        train, test = turn_fold != f, turn_fold == f
        cal = SigmoidCalibrator.fit(raw[train], y[train])
        calibrated[test] = cal.transform(raw[test])
        calibrators.append(cal)

    raw_hits = int((calibrated < eps).sum())
    return HeadPropensityModel(
        head=head, probs=floor_mix(calibrated, eps), eps=eps, turn_fold=turn_fold,
        train_sessions=train_sessions, fold_models=models, calibrators=calibrators,
        scaler=scaler, raw_floor_hits=raw_hits,
    )


@dataclass
class RatingPropensityModel:
    """Cross-fitted ``P(rated | x)`` per turn, clipped to [eps, 1-eps]."""

    probs: np.ndarray
    eps: float = PROPENSITY_FLOOR
    auc: Optional[float] = None
    no_selection: bool = False
    turn_fold: Optional[np.ndarray] = None

    @classmethod
    def from_known(cls, probs: np.ndarray, eps: float = PROPENSITY_FLOOR) -> "RatingPropensityModel":
        return cls(probs=np.clip(np.asarray(probs, dtype=float), eps, 1 - eps), eps=eps)


def fit_rating_propensity(
    data: Union[LogFrame, Sequence[Session]],
    n_folds: Optional[int] = None,
    eps: float = PROPENSITY_FLOOR,
    c: float = 1.0,
    seed: int = 0,
) -> RatingPropensityModel:
    frame = _as_frame(data)
    m = frame.rated.astype(int)
    if m.all() or not m.any():
        # no variation in missingness: nothing to correct
        const = 1 - eps if m.all() else eps
        return RatingPropensityModel(
            probs=np.full(len(m), const), eps=eps, no_selection=True,
        )
    n_folds = default_n_folds(frame.n_sessions) if n_folds is None else n_folds
    folds = session_folds(frame.n_sessions, n_folds, seed)
    turn_fold = folds[frame.session]
    X = frame.design_matrix(Standardizer.fit(frame.latency, frame.chars))
    p = np.zeros(len(m))
    for f in range(n_folds):
        train, test = turn_fold != f, turn_fold == f
        if len(np.unique(m[train])) == 1:
            p[test] = m[train][0]
        else:
            p[test] = _classifier(c).fit(X[train], m[train]).predict_proba(X[test])[:, 1]
    p = np.clip(p, eps, 1 - eps)
    return RatingPropensityModel(probs=p, eps=eps, auc=auc(p, m), turn_fold=turn_fold)


def ece(probs: np.ndarray, labels: np.ndarray, n_bins: int = 10) -> float:
    """Binned calibration error of binary predictions.

    Bins are equal-width on [0, 1]; a prediction of exactly 1.0 lands in the
    last bin.
    """
    probs = np.asarray(probs, dtype=float).ravel()
    labels = np.asarray(labels, dtype=float).ravel()
    if probs.size == 0:
        raise ContractError("ECE of empty input is undefined")
    if probs.shape != labels.shape:
        raise ContractError("probs and labels differ in length")
    if probs.min() < 0 or probs.max() > 1:
        raise ContractError("probabilities must lie in [0, 1]")
    bins = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    # exact per-bin sums keep constant-prediction cases exact
    terms = []
    for b in np.unique(bins):
        members = bins == b
        count = int(members.sum())
        gap = abs(math.fsum(labels[members]) - math.fsum(probs[members])) / count
        terms.append(count * gap)
    return math.fsum(terms) / probs.size


def multiclass_ece(prob_matrix: np.ndarray, labels: np.ndarray, n_bins: int = 10) -> float:
    """Confidence ECE: bins on the max predicted probability, accuracy of the argmax."""
    prob_matrix = np.asarray(prob_matrix, dtype=float)
    conf = prob_matrix.max(axis=1)
    correct = prob_matrix.argmax(axis=1) == np.asarray(labels)
    return ece(conf, correct, n_bins)


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outranks a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
