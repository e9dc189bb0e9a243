"""Stratified splitting, cross-validation over (alpha, lambda) and comparison protocols."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .censoring import check_follow_up, fit_censoring_km, ipcw_weights, ipcw_weights_arrays
from .data import Dataset
from .evaluation import (ScoredSample, bootstrap_auc, bootstrap_indices, likelihood_score,
                         pairwise_auc_test, percentile_ci, time_auc)
from .exceptions import InsufficientFollowUpError, StratificationError
from .midas import MidasDictionary, aggregate, default_dictionary, make_dictionary
from .solver import FitResult, PenaltySpec, SolverOptions, fit, fit_path, lambda_path, predict_prob

logger = logging.getLogger(__name__)

ALPHA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


def derive_seed(seed: int, *coords: int) -> int:
    """Independent integer seed for a task at ``coords``."""
    return int(np.random.SeedSequence([int(seed), *map(int, coords)]).generate_state(1)[0])


def _canonical_order(ds: Dataset) -> np.ndarray:
    # row-order independent: sort by id, then by the row's content
    keys = (ds.status, ds.time, ds.ids)
    return np.lexsort(keys)


def stratified_split(ds: Dataset, t: float, frac: float, seed: int):
    """Split into ``(train, test)`` keeping the event share of ``1{T~ <= t} delta``.

    Events and non-events are shuffled separately and
    ``floor(frac * count)`` of each go to the training part.
    """
    if not 0 < frac < 1:
        raise ValueError("frac must lie in (0, 1)")
    labels = ds.event_indicator(t)
    if labels.sum() < 2:
        raise StratificationError(f"need at least 2 events before t={t} to stratify")
    order = _canonical_order(ds)
    rng = np.random.default_rng(seed)
    train = []
    for value in (1, 0):
        members = order[labels[order] == value]
        members = members[rng.permutation(members.size)]
        train.append(members[: int(np.floor(frac * members.size))])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(ds.n), train)
    return ds.subset(train), ds.subset(test)


def stratified_folds(ds: Dataset, t: float, k: int, seed: int) -> np.ndarray:
    """Fold label per unit; each fold's event count is within one of ``events/k``."""
    if not 2 <= k <= ds.n:
        raise ValueError(f"k must lie in [2, N], got {k}")
    labels = ds.event_indicator(t)
    order = _canonical_order(ds)
    rng = np.random.default_rng(seed)
    folds = np.empty(ds.n, dtype=int)
    offset = 0
    for value in (1, 0):
        members = order[labels[order] == value]
        members = members[rng.permutation(members.size)]
        folds[members] = (np.arange(members.size) + offset) % k
        offset += members.size
    return folds


def oversample(train: Dataset, t: float, target: float, seed: int) -> Dataset:
    """Duplicate random event units until their share reaches ``target``."""
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    labels = train.event_indicator(t)
    minority = np.flatnonzero(labels == 1)
    if minority.size == 0:
        raise StratificationError("no minority (event) units to oversample")
    e, n = minority.size, train.n
    if e / n >= target:
        return train
    extra = int(np.ceil((target * n - e) / (1 - target)))
    while extra > 0 and (e + extra - 1) / (n + extra - 1) >= target:
        extra -= 1
    while (e + extra) / (n + extra) < target:
        extra += 1
    rng = np.random.default_rng(seed)
    pool = minority[_canonical_rank(train, minority)]
    dup = pool[rng.integers(0, e, extra)]
    return train.subset(np.concatenate([np.arange(n), dup]))


def _canonical_rank(ds, members):
    order = _canonical_order(ds)
    rank = np.empty(ds.n, dtype=int)
    rank[order] = np.arange(ds.n)
    return np.argsort(rank[members])


def drop_censored_filter(ds: Dataset, t: float) -> Dataset:
    """Remove units censored strictly before ``t``."""
    keep = ~((ds.status == 0) & (ds.time < t))
    return ds.subset(np.flatnonzero(keep))


def training_weights(ds: Dataset, t: float, drop_censored: bool = False):
    """IPCW outcome weights, or plain indicators for the drop-censored baseline."""
    check_follow_up(ds.time, t)
    if drop_censored:
        return ds.event_indicator(t).astype(float), None
    km = fit_censoring_km(ds)
    return ipcw_weights(ds, km, t).weights, km


@dataclass(frozen=True)
class CvPlan:
    k: int = 5
    metric: str = "auc"
    alpha_grid: tuple = ALPHA_GRID
    n_lambda: int = 100
    ratio: float | None = None
    seed: int = 0
    oversample: float | None = None
    drop_censored: bool = False
    kappa: float | None = None
    n_jobs: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.metric not in ("auc", "likelihood"):
            raise ValueError(f"metric must be 'auc' or 'likelihood', got {self.metric!r}")


@dataclass(frozen=True, eq=False)
class CvResult:
    alphas: np.ndarray
    lambdas: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    fold_metrics: np.ndarray
    best_alpha: float
    best_lambda: float
    fit: FitResult
    dictionary: MidasDictionary
    metric: str

    def table(self):
        """Rows ``(alpha, lambda, mean, sd)`` over the grid."""
        rows = []
        for a, alpha in enumerate(self.alphas):
            for j, lam in enumerate(self.lambdas[a]):
                rows.append((float(alpha), float(lam), float(self.mean[a, j]), float(self.sd[a, j])))
        return rows


def _prepare_train(ds: Dataset, t: float, plan: CvPlan, seed: int) -> Dataset:
    if plan.drop_censored:
        ds = drop_censored_filter(ds, t)
    if plan.oversample:
        ds = oversample(ds, t, plan.oversample, seed)
    return ds


def _fold_inputs(ds, t, plan, folds, dictionary):
    out = []
    for f in range(plan.k):
        tr = ds.subset(np.flatnonzero(folds != f))
        te = ds.subset(np.flatnonzero(folds == f))
        tr = _prepare_train(tr, t, plan, derive_seed(plan.seed, 1, f))
        w, km = training_weights(tr, t, plan.drop_censored)
        out.append((aggregate(tr, dictionary), w, km, te, aggregate(te, dictionary)))
    return out


def _score(plan, t, fits, te, x_te, km, n_lambda):
    # lambdas past a diverged fit are left as NaN
    vals = np.full(n_lambda, np.nan)
    if plan.metric == "likelihood":
        if plan.drop_censored or km is None:
            keep = ~((te.status == 0) & (te.time < t))
            w_te = te.event_indicator(t)[keep].astype(float)
            rows = np.flatnonzero(keep)
        else:
            try:
                w_te = ipcw_weights_arrays(te.time, te.status, km, t).weights
            except InsufficientFollowUpError:
                return vals
            rows = np.arange(te.n)
    for j, res in enumerate(fits):
        if res.diverged:
            continue
        p = predict_prob(res, x_te.x)
        if plan.metric == "auc":
            vals[j] = time_auc(ScoredSample(p, te.time, te.status, t), plan.kappa)
        else:
            vals[j] = likelihood_score(p[rows], w_te)
    return vals


def _best_cell(mean, lambdas, alphas):
    if not np.any(np.isfinite(mean)):
        raise RuntimeError("cross-validation produced no finite metric values")
    top = np.nanmax(mean)
    best = None
    for a in range(mean.shape[0]):
        for j in range(mean.shape[1]):
            if mean[a, j] == top:
                key = (lambdas[a, j], alphas[a])
                if best is None or key > best[0]:
                    best = (key, a, j)
    return best[1], best[2]


def cross_validate(ds: Dataset, t: float, dictionary: MidasDictionary | None = None,
                   plan: CvPlan | None = None) -> CvResult:
    """k-fold stratified CV over the ``(alpha, lambda)`` grid, then a full refit.

    The lambda path for each alpha is computed once on the full data and
    shared by all folds.  Censoring weights are re-estimated inside every
    training fold, after oversampling.
    """
    plan = plan or CvPlan()
    dictionary = dictionary or default_dictionary(ds.d)
    check_follow_up(ds.time, t)
    full = _prepare_train(ds, t, plan, derive_seed(plan.seed, 0))
    w_full, _ = training_weights(full, t, plan.drop_censored)
    x_full = aggregate(full, dictionary)
    alphas = np.asarray(plan.alpha_grid, dtype=float)
    lambdas = np.stack([lambda_path(x_full, w_full, a, plan.n_lambda, plan.ratio,
                                    plan.solver.standardize) for a in alphas])

    inputs = None
    for attempt in range(2):
        folds = stratified_folds(ds, t, plan.k, plan.seed + attempt)
        try:
            inputs = _fold_inputs(ds, t, plan, folds, dictionary)
            break
        except InsufficientFollowUpError:
            if attempt == 1:
                raise
            logger.warning("a training fold fails the follow-up condition; resampling folds")

    def task(coord):
        a, f = coord
        x_tr, w_tr, km, te, x_te = inputs[f]
        fits = fit_path(x_tr, w_tr, alphas[a], lambdas[a], plan.solver)
        return _score(plan, t, fits, te, x_te, km, len(lambdas[a]))

    coords = [(a, f) for a in range(len(alphas)) for f in range(plan.k)]
    if plan.n_jobs > 1:
        with ThreadPoolExecutor(plan.n_jobs) as ex:
            results = list(ex.map(task, coords))
    else:
        results = [task(c) for c in coords]
    fold_metrics = np.empty((len(alphas), plan.n_lambda, plan.k))
    for (a, f), vals in zip(coords, results):
        fold_metrics[a, :, f] = vals
    # a cell counts only if every fold produced a value
    mean = fold_metrics.mean(axis=2)
    sd = fold_metrics.std(axis=2)
    a_best, j_best = _best_cell(mean, lambdas, alphas)
    path = fit_path(x_full, w_full, alphas[a_best], lambdas[a_best][: j_best + 1], plan.solver,
                    stop_on_divergence=False)
    if path[-1].diverged:
        logger.warning("refit at the selected lambda diverged on the full sample")
    return CvResult(alphas, lambdas, mean, sd, fold_metrics, float(alphas[a_best]),
                    float(lambdas[a_best, j_best]), path[-1], dictionary, plan.metric)


@dataclass(frozen=True)
class Method:
    """A named estimator: dictionary choice plus its alpha grid.

    ``lam`` fixes the penalty instead of cross-validating it (the
    unpenalised logistic benchmark uses ``lam=0``).
    """

    name: str
    family: str
    L: int | None = 3
    params: tuple = ()
    alpha_grid: tuple = (1.0,)
    lam: float | None = None

    def dictionary(self, d: int) -> MidasDictionary:
        return make_dictionary(self.family, self.L, d, self.params)


METHODS = {
    "lasso_u": Method("lasso_u", "unrestricted", None, (), (1.0,)),
    "lasso_m": Method("lasso_m", "gegenbauer", 3, (-0.5,), (1.0,)),
    "sg_lasso_m": Method("sg_lasso_m", "gegenbauer", 3, (-0.5,), ALPHA_GRID),
    "logistic": Method("logistic", "latest", 1, (), (1.0,), lam=0.0),
}


@dataclass(frozen=True, eq=False)
class MethodFit:
    method: Method
    dictionary: MidasDictionary
    fit: FitResult
    cv: CvResult | None = None


def fit_method(ds: Dataset, t: float, method: Method, plan: CvPlan) -> MethodFit:
    dictionary = method.dictionary(ds.d)
    if method.lam is not None:
        train = _prepare_train(ds, t, plan, derive_seed(plan.seed, 0))
        w, _ = training_weights(train, t, plan.drop_censored)
        x = aggregate(train, dictionary)
        res = fit(x, w, PenaltySpec.for_design(x, method.alpha_grid[0], method.lam), plan.solver)
        return MethodFit(method, dictionary, res)
    cv = cross_validate(ds, t, dictionary, replace(plan, alpha_grid=tuple(method.alpha_grid)))
    return MethodFit(method, dictionary, cv.fit, cv)


def score_method(mf: MethodFit, ds: Dataset) -> np.ndarray:
    return predict_prob(mf.fit, aggregate(ds, mf.dictionary).x)


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    methods: tuple
    split_aucs: np.ndarray
    boot: np.ndarray
    mean: np.ndarray
    ci: tuple

    def summary(self):
        return [(m, float(self.mean[i]), *self.ci[i]) for i, m in enumerate(self.methods)]

    def p_value(self, a: str, b: str) -> float:
        ia, ib = self.methods.index(a), self.methods.index(b)
        return pairwise_auc_test(self.boot[ia], self.boot[ib])


def repeated_split_protocol(ds: Dataset, t: float, methods, n_splits: int = 10, b: int = 1000,
                            seed: int = 0, plan: CvPlan | None = None,
                            frac: float = 0.8) -> ProtocolResult:
    """Repeated 80/20 splits with CV fits and paired bootstrap test AUCs.

    For each split every method is tuned on the training part and scored on
    the same test part; the test part is bootstrapped ``b`` times with the
    same resample indices for all methods.  Bootstrap AUCs are averaged
    across splits at each replicate index.
    """
    if n_splits < 1:
        raise ValueError("n_splits must be at least 1")
    plan = plan or CvPlan(seed=seed)
    methods = [METHODS[m] if isinstance(m, str) else m for m in methods]
    names = tuple(m.name for m in methods)
    split_aucs = np.full((len(methods), n_splits), np.nan)
    boot = np.full((len(methods), n_splits, b), np.nan)
    for sp in range(n_splits):
        train, test = stratified_split(ds, t, frac, derive_seed(seed, 2, sp))
        idx = bootstrap_indices(test.n, b, derive_seed(seed, 3, sp))
        split_plan = replace(plan, seed=derive_seed(seed, 4, sp))
        for i, method in enumerate(methods):
            mf = fit_method(train, t, method, split_plan)
            sample = ScoredSample(score_method(mf, test), test.time, test.status, t)
            split_aucs[i, sp] = time_auc(sample, plan.kappa)
            boot[i, sp] = bootstrap_auc(sample, b, 0, plan.kappa, indices=idx).aucs
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        averaged = np.nanmean(boot, axis=1)
    mean = np.nanmean(averaged, axis=1)
    ci = tuple(percentile_ci(averaged[i]) for i in range(len(methods)))
    return ProtocolResult(names, split_aucs, averaged, mean, ci)
