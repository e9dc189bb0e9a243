"""Time-dependent ROC analysis under right censoring.

Sensitivity and specificity at horizon ``t`` are estimated with the
nearest-neighbour conditional Kaplan-Meier: for each unit the survival at
``t`` is estimated from the units whose score ranks lie within ``kappa`` of
its own.  With ``S_i`` that estimate,

    S(c)   = mean(S_i * 1{score_i > c})
    Se(c)  = (mean(1{score_i > c}) - S(c)) / (1 - S(-inf))
    Sp(c)  = 1 - S(c) / S(-inf)
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import xlog1py, xlogy

from .exceptions import DegenerateHorizonError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredSample:
    scores: np.ndarray
    time: np.ndarray
    status: np.ndarray
    t: float

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        time = np.asarray(self.time, dtype=float)
        status = np.asarray(self.status).astype(int)
        if not scores.shape == time.shape == status.shape:
            raise ValueError("scores, time and status must have equal length")
        if np.any((scores < 0) | (scores > 1)):
            raise ValueError("scores must be probabilities in [0, 1]")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)

    def __len__(self):
        return self.scores.shape[0]

    def take(self, index) -> "ScoredSample":
        return ScoredSample(self.scores[index], self.time[index], self.status[index], self.t)


@dataclass(frozen=True)
class RocCurve:
    """ROC curve at one horizon.

    ``fpr``/``tpr`` are the monotonised curve used for ``auc``; the ``_raw``
    variants are the clamped estimator output before monotonisation.
    Arrays are ordered by threshold, from ``-inf`` to ``+inf``.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    fpr_raw: np.ndarray
    tpr_raw: np.ndarray
    auc: float
    auc_raw: float
    kappa: float
    t: float
    survival: float
    skipped_factors: int = 0

    @property
    def points(self):
        order = np.lexsort((self.tpr, self.fpr))
        return list(zip(self.fpr[order].tolist(), self.tpr[order].tolist()))


def default_kappa(n: int) -> float:
    """Neighbourhood half-width with span ``2*kappa = 0.25 * n**(-1/5)``."""
    if n < 2:
        raise ValueError(f"default kappa needs at least 2 units, got {n}")
    return 0.5 * 0.25 * n ** (-0.2)


def empirical_cdf(scores) -> np.ndarray:
    """``F(score_i) = #{j : score_j <= score_i} / N`` (ties share the top rank)."""
    scores = np.asarray(scores, dtype=float)
    srt = np.sort(scores)
    return np.searchsorted(srt, scores, side="right") / scores.size


def nn_conditional_survival(sample: ScoredSample, kappa: float):
    """Per-unit nearest-neighbour Kaplan-Meier survival at ``sample.t``.

    Returns
    -------
    surv : ndarray, shape (N,)
    skipped : int
        Number of product factors dropped because the neighbourhood risk set
        was empty.
    """
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    F = empirical_cdf(sample.scores)
    psi = (np.abs(F[:, None] - F[None, :]) < kappa).astype(float)
    time, status = sample.time, sample.status
    a = np.unique(time[(status == 1) & (time <= sample.t)])
    if a.size == 0:
        return np.ones(len(sample)), 0
    events = ((time[:, None] == a[None, :]) & (status[:, None] == 1)).astype(float)
    risk = (time[:, None] >= a[None, :]).astype(float)
    d = psi @ events
    r = psi @ risk
    empty = r == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(empty, 1.0, 1.0 - d / np.where(empty, 1.0, r))
    skipped = int(empty.sum())
    if skipped:
        logger.debug("skipped %d empty-risk-set factors", skipped)
    return np.prod(factor, axis=1), skipped


def _trapezoid(fpr, tpr):
    order = np.lexsort((tpr, fpr))
    x = np.concatenate(([0.0], fpr[order], [1.0]))
    y = np.concatenate(([0.0], tpr[order], [1.0]))
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))


def roc_curve(sample: ScoredSample, kappa: float | None = None) -> RocCurve:
    """Nearest-neighbour time-dependent ROC curve and its AUC."""
    n = len(sample)
    if kappa is None:
        kappa = default_kappa(n)
    surv, skipped = nn_conditional_survival(sample, kappa)
    scores = sample.scores
    order = np.argsort(scores, kind="stable")
    cum_s = np.concatenate(([0.0], np.cumsum(surv[order])))
    # same summation as S(c) so the -inf threshold gives Se = 1, Sp = 0 exactly
    total = cum_s[-1] / n
    if not 0 < total < 1:
        raise DegenerateHorizonError(
            f"estimated survival at t={sample.t} is {total}; need both failures and survivors"
        )
    srt = scores[order]
    uniq = np.unique(srt)
    thresholds = np.concatenate(([-np.inf], uniq, [np.inf]))
    # units strictly above each threshold
    cut = np.searchsorted(srt, thresholds, side="right")
    above = (n - cut) / n
    s_c = (cum_s[-1] - cum_s[cut]) / n
    se = np.clip((above - s_c) / (1 - total), 0.0, 1.0)
    sp = np.clip(1 - s_c / total, 0.0, 1.0)
    # Se non-increasing and Sp non-decreasing in the threshold
    se_m = np.maximum.accumulate(se[::-1])[::-1]
    sp_m = np.maximum.accumulate(sp)
    fpr_raw, tpr_raw = 1 - sp, se
    fpr, tpr = 1 - sp_m, se_m
    return RocCurve(
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        fpr_raw=fpr_raw,
        tpr_raw=tpr_raw,
        auc=_trapezoid(fpr, tpr),
        auc_raw=_trapezoid(fpr_raw, tpr_raw),
        kappa=float(kappa),
        t=float(sample.t),
        survival=float(total),
        skipped_factors=skipped,
    )


def time_auc(sample: ScoredSample, kappa: float | None = None) -> float:
    """AUC of :func:`roc_curve`, or NaN when the horizon is degenerate."""
    try:
        return roc_curve(sample, kappa).auc
    except DegenerateHorizonError:
        return float("nan")


def likelihood_score(sample: ScoredSample | np.ndarray, w) -> float:
    """Held-out IPCW log-likelihood, the negative empirical risk."""
    p = sample.scores if isinstance(sample, ScoredSample) else np.asarray(sample, dtype=float)
    f = np.asarray(w, dtype=float)
    if p.shape != f.shape:
        raise ValueError("scores and weights must have equal length")
    return float(np.mean(xlogy(f, p) + xlog1py(1 - f, -p)))


@dataclass(frozen=True)
class BootstrapResult:
    aucs: np.ndarray
    ci: tuple
    skipped: int

    @property
    def mean(self) -> float:
        return float(np.nanmean(self.aucs))


def bootstrap_indices(n: int, b: int, seed: int) -> np.ndarray:
    """Resample indices, one independent stream per replicate."""
    return np.stack([np.random.default_rng([seed, r]).integers(0, n, n) for r in range(b)])


def percentile_ci(values, level: float = 0.95):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return (float("nan"), float("nan"))
    lo, hi = np.percentile(values, [50 * (1 - level), 50 * (1 + level)])
    return (float(lo), float(hi))


def bootstrap_auc(sample: ScoredSample, b: int, seed: int, kappa: float | None = None,
                  indices=None, n_jobs: int = 1) -> BootstrapResult:
    """Bootstrap distribution of the AUC with a percentile 95% interval.

    Replicates with no events before ``t`` (or no survivors) are recorded as
    NaN and counted in ``skipped``.  ``kappa=None`` applies the default rule
    at each replicate's size.
    """
    if b < 1:
        raise ValueError("need at least one bootstrap replicate")
    n = len(sample)
    if indices is None:
        indices = bootstrap_indices(n, b, seed)
    indices = np.asarray(indices)

    def one(idx):
        return time_auc(sample.take(idx), kappa)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            aucs = np.array(list(ex.map(one, indices)))
    else:
        aucs = np.array([one(idx) for idx in indices])
    skipped = int(np.isnan(aucs).sum())
    return BootstrapResult(aucs, percentile_ci(aucs), skipped)


def pairwise_auc_test(auc_a, auc_b) -> float:
    """Share of replicates in which ``auc_a`` is strictly below ``auc_b``."""
    a = np.asarray(auc_a, dtype=float)
    b = np.asarray(auc_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("AUC vectors must have equal length")
    if a.size == 0:
        raise ValueError("empty AUC vectors")
    return float(np.mean(a < b))
