"""Sparse-group LASSO penalised IPCW logistic regression.

Minimises ``R_N(b) + lam * Omega(b)`` where

    R_N(b)   = mean(-f_i * x_i'b + log(1 + exp(x_i'b)))
    Omega(b) = alpha * |b_pen|_1 + (1 - alpha) * sum_G |b_G|_2

over penalised coordinates only (the intercept is never penalised).  The
solver is accelerated proximal gradient with backtracking and a momentum
restart whenever the objective would increase, so the accepted objective
sequence is non-increasing.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .midas import DesignMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltySpec:
    alpha: float
    lam: float
    groups: tuple
    penalized: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @classmethod
    def for_design(cls, x: DesignMatrix, alpha: float, lam: float) -> "PenaltySpec":
        return cls(alpha, lam, x.groups, x.penalized)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-7
    max_iter: int = 10000
    standardize: bool = True
    warm_start: np.ndarray | None = None
    check_every: int = 5
    record_history: bool = False
    eta_limit: float | None = 100.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.eta_limit is not None and not self.eta_limit > 0:
            raise ValueError("eta_limit must be positive")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of one penalised fit.

    ``beta`` is on the scale of the supplied design matrix; ``beta_std``,
    ``objective`` and ``kkt_residual`` refer to the internally standardised
    problem (identical to the raw one when ``standardize=False``).
    """

    beta: np.ndarray
    beta_std: np.ndarray
    objective: float
    risk: float
    iterations: int
    kkt_residual: float
    converged: bool
    lam: float
    alpha: float
    center: np.ndarray
    scale: np.ndarray
    history: tuple = field(default=(), repr=False)
    diverged: bool = False

    @property
    def intercept(self) -> float:
        return float(self.beta[0])


def _as_matrix(x):
    return x.x if isinstance(x, DesignMatrix) else np.asarray(x, dtype=float)


def _as_weights(w):
    return np.asarray(w, dtype=float)


def _log1pexp(z):
    # log(1 + e^z) without overflow
    return np.logaddexp(0.0, z)


def empirical_risk(x, w, beta) -> float:
    """IPCW logistic empirical risk ``R_N(beta)``."""
    X = _as_matrix(x)
    f = _as_weights(w)
    beta = np.asarray(beta, dtype=float)
    if X.shape[0] != f.shape[0] or X.shape[1] != beta.shape[0]:
        raise ValueError("dimension mismatch between design, weights and coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(f)) and np.all(np.isfinite(beta))):
        raise ValueError("non-finite entries in risk evaluation")
    eta = X @ beta
    return float(np.mean(-f * eta + _log1pexp(eta)))


def risk_gradient(x, w, beta) -> np.ndarray:
    X = _as_matrix(x)
    f = _as_weights(w)
    eta = X @ np.asarray(beta, dtype=float)
    return X.T @ (expit(eta) - f) / X.shape[0]


class _GroupLayout:
    """Penalised group structure with a fast path for equal contiguous blocks."""

    def __init__(self, groups, penalized, p):
        penalized = np.asarray(penalized, dtype=bool)
        if penalized.shape != (p,):
            raise ValueError("penalized mask does not match coefficient length")
        self.p = p
        self.penalized = penalized
        self.free = np.flatnonzero(~penalized)
        pen_groups = []
        for g in groups:
            g = np.asarray(g, dtype=int)
            mask = penalized[g]
            if mask.any() and not mask.all():
                raise ValueError("a group mixes penalised and unpenalised coordinates")
            if mask.all():
                pen_groups.append(g)
        covered = np.concatenate(pen_groups) if pen_groups else np.empty(0, int)
        if np.sort(covered).tolist() != np.flatnonzero(penalized).tolist():
            raise ValueError("groups must partition the penalised coordinates")
        self.groups = pen_groups
        self.block = None
        if pen_groups:
            size = len(pen_groups[0])
            start = int(pen_groups[0][0])
            if all(len(g) == size for g in pen_groups) and np.array_equal(
                covered, start + np.arange(len(pen_groups) * size)
            ):
                self.block = (start, len(pen_groups), size)

    def _blocks(self, v):
        start, k, size = self.block
        return v[start:start + k * size].reshape(k, size)

    def omega(self, b, alpha):
        if not self.groups:
            return 0.0
        l1 = np.abs(b[self.penalized]).sum()
        if self.block is not None:
            l2 = np.sqrt((self._blocks(b) ** 2).sum(axis=1)).sum()
        else:
            l2 = sum(np.linalg.norm(b[g]) for g in self.groups)
        return float(alpha * l1 + (1 - alpha) * l2)

    def prox(self, v, step, lam, alpha):
        out = np.array(v, dtype=float, copy=True)
        if lam == 0 or not self.groups:
            return out
        t1 = step * lam * alpha
        t2 = step * lam * (1 - alpha)
        if self.block is not None:
            start, k, size = self.block
            u = self._blocks(out)
            u = np.sign(u) * np.maximum(np.abs(u) - t1, 0.0)
            norms = np.sqrt((u ** 2).sum(axis=1))
            with np.errstate(divide="ignore", invalid="ignore"):
                shrink = np.where(norms > 0, np.maximum(0.0, 1.0 - t2 / norms), 0.0)
            out[start:start + k * size] = (u * shrink[:, None]).ravel()
            return out
        for g in self.groups:
            u = np.sign(out[g]) * np.maximum(np.abs(out[g]) - t1, 0.0)
            nrm = np.linalg.norm(u)
            out[g] = u * max(0.0, 1.0 - t2 / nrm) if nrm > 0 else 0.0
        return out

    def kkt(self, b, g, lam, alpha):
        """Largest violation of the subgradient optimality conditions."""
        viol = float(np.max(np.abs(g[self.free]))) if self.free.size else 0.0
        if not self.groups:
            return viol
        l1 = lam * alpha
        l2 = lam * (1 - alpha)
        groups = [self._blocks(b), self._blocks(g)] if self.block is not None else None
        if groups is not None:
            B, G = groups
            zero = ~np.any(B != 0, axis=1)
            soft = np.maximum(np.abs(G) - l1, 0.0)
            if zero.any():
                viol = max(viol, float(np.max(np.sqrt((soft[zero] ** 2).sum(axis=1)) - l2)))
            nz = ~zero
            if nz.any():
                Bn, Gn = B[nz], G[nz]
                norms = np.sqrt((Bn ** 2).sum(axis=1, keepdims=True))
                active = Bn != 0
                r_act = np.abs(Gn + l1 * np.sign(Bn) + l2 * Bn / norms)
                r_in = np.maximum(np.abs(Gn) - l1, 0.0)
                viol = max(viol, float(np.max(np.where(active, r_act, r_in))))
            return max(viol, 0.0)
        for grp in self.groups:
            bg, gg = b[grp], g[grp]
            if not np.any(bg):
                s = np.maximum(np.abs(gg) - l1, 0.0)
                viol = max(viol, float(np.linalg.norm(s) - l2))
            else:
                nrm = np.linalg.norm(bg)
                act = bg != 0
                r = np.where(act, np.abs(gg + l1 * np.sign(bg) + l2 * bg / nrm),
                             np.maximum(np.abs(gg) - l1, 0.0))
                viol = max(viol, float(r.max()))
        return max(viol, 0.0)


def prox_sg(v, step: float, spec: PenaltySpec) -> np.ndarray:
    """Proximal map of ``step * lam * Omega`` at ``v``.

    Per penalised group: soft-threshold by ``step*lam*alpha`` then shrink the
    group norm by ``step*lam*(1-alpha)``.  Unpenalised entries pass through.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    v = np.asarray(v, dtype=float)
    layout = _GroupLayout(spec.groups, spec.penalized, v.shape[0])
    return layout.prox(v, step, spec.lam, spec.alpha)


def _power_norm_sq(X, n_iter=30, seed=0):
    """Estimate of the largest eigenvalue of X'X by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(n_iter):
        u = X.T @ (X @ v)
        est = np.linalg.norm(u)
        if est == 0:
            return 0.0
        v = u / est
    return float(est)


class _Problem:
    """Standardised design, weights and cached constants shared along a path."""

    def __init__(self, x, w, groups, penalized, standardize=True):
        X = _as_matrix(x)
        f = _as_weights(w)
        if X.shape[0] != f.shape[0]:
            raise ValueError("design and weights disagree on the number of rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(f))):
            raise ValueError("non-finite entries in design or weights")
        n, p = X.shape
        self.n, self.p = n, p
        self.f = f
        self.layout = _GroupLayout(groups, penalized, p)
        pen = self.layout.penalized
        self.center = np.zeros(p)
        self.scale = np.ones(p)
        self.intercept = None
        ones = np.flatnonzero(np.all(X == 1.0, axis=0) & ~pen)
        if ones.size:
            self.intercept = int(ones[0])
        if standardize:
            if self.intercept is None:
                raise ValueError("standardisation requires an unpenalised intercept column")
            mu = X[:, pen].mean(axis=0)
            sd = X[:, pen].std(axis=0)
            sd[sd == 0] = 1.0
            self.center[pen] = mu
            self.scale[pen] = sd
            Xs = X.copy()
            Xs[:, pen] = (X[:, pen] - mu) / sd
            self.X = Xs
        else:
            self.X = X
        self.L0 = max(_power_norm_sq(self.X) / (4.0 * n) * 1.01, 1e-12)
        self.L = self.L0

    def to_std(self, beta):
        beta = np.asarray(beta, dtype=float)
        b = beta * self.scale
        if self.intercept is not None:
            b[self.intercept] = beta[self.intercept] + self.center @ beta
        return b

    def to_raw(self, b):
        beta = b / self.scale
        if self.intercept is not None:
            beta[self.intercept] = b[self.intercept] - self.center @ beta
        return beta

    def risk(self, eta):
        return float((_log1pexp(eta).sum() - self.f @ eta) / self.n)

    def grad(self, eta):
        return self.X.T @ (expit(eta) - self.f) / self.n

    def null_intercept(self):
        """Intercept of the intercept-only model, or None when it diverges."""
        pbar = self.f.mean()
        if self.intercept is None or not 0 < pbar < 1:
            return None
        return float(np.log(pbar / (1 - pbar)))

    def start(self):
        b = np.zeros(self.p)
        b0 = self.null_intercept()
        if b0 is not None:
            b[self.intercept] = b0
        return b


def _solve(prob: _Problem, lam, alpha, b, opts: SolverOptions):
    layout = prob.layout
    X = prob.X
    x = np.array(b, dtype=float)
    eta_x = X @ x
    Fx = prob.risk(eta_x) + lam * layout.omega(x, alpha)
    y, eta_y, t = x.copy(), eta_x.copy(), 1.0
    history = [Fx] if opts.record_history else None
    momentum = False
    kkt = np.inf
    it = 0
    diverged = False
    limit = np.inf if opts.eta_limit is None else opts.eta_limit
    L = prob.L
    for it in range(1, opts.max_iter + 1):
        g = prob.grad(eta_y)
        Ry = prob.risk(eta_y)
        while True:
            z = layout.prox(y - g / L, 1.0 / L, lam, alpha)
            dz = z - y
            eta_z = X @ z
            Rz = prob.risk(eta_z)
            if Rz <= Ry + g @ dz + 0.5 * L * (dz @ dz) + 1e-14 * (1 + abs(Ry)):
                break
            L *= 2.0
        Fz = Rz + lam * layout.omega(z, alpha)
        if Fz <= Fx:
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            c = (t - 1) / t_new
            y = z + c * (z - x)
            eta_y = eta_z + c * (eta_z - eta_x)
            x, eta_x, Fx, t = z, eta_z, Fz, t_new
            momentum = c > 0
            if history is not None:
                history.append(Fx)
            if np.abs(eta_x).max() > limit:
                # fitted probabilities are saturated and the objective keeps
                # falling along a separating direction
                diverged = True
                kkt = layout.kkt(x, prob.grad(eta_x), lam, alpha)
                break
        elif momentum:
            y, eta_y, t, momentum = x.copy(), eta_x.copy(), 1.0, False
            continue
        else:
            # a plain step from x failed to descend: numerical floor reached
            eta_x = X @ x
            kkt = layout.kkt(x, prob.grad(eta_x), lam, alpha)
            break
        if it % opts.check_every == 0:
            eta_x = X @ x
            kkt = layout.kkt(x, prob.grad(eta_x), lam, alpha)
            if kkt <= opts.tol:
                break
    else:
        eta_x = X @ x
        kkt = layout.kkt(x, prob.grad(eta_x), lam, alpha)
    prob.L = L
    Fx = prob.risk(eta_x) + lam * layout.omega(x, alpha)
    return x, Fx, prob.risk(eta_x), it, kkt, history, diverged


def _result(prob, lam, alpha, b, F, R, it, kkt, history, diverged, opts):
    converged = bool(kkt <= opts.tol) and not diverged
    if diverged:
        logger.info("fit diverged: lambda=%g alpha=%g, |x'b| exceeded %g after %d iterations",
                    lam, alpha, opts.eta_limit, it)
    elif not converged:
        logger.info("fit did not converge: lambda=%g alpha=%g kkt=%.3g after %d iterations",
                    lam, alpha, kkt, it)
    return FitResult(
        beta=prob.to_raw(b),
        beta_std=b,
        objective=float(F),
        risk=float(R),
        iterations=int(it),
        kkt_residual=float(kkt),
        converged=converged,
        lam=float(lam),
        alpha=float(alpha),
        center=prob.center,
        scale=prob.scale,
        history=tuple(history) if history else (),
        diverged=bool(diverged),
    )


def _initial(prob, opts):
    if opts.warm_start is not None:
        return prob.to_std(opts.warm_start)
    return prob.start()


def fit(x: DesignMatrix, w, spec: PenaltySpec, opts: SolverOptions | None = None) -> FitResult:
    """Solve the penalised IPCW logistic problem at one ``(lam, alpha)``.

    Non-convergence within ``max_iter`` is reported through
    ``FitResult.converged`` rather than raised.
    """
    opts = opts or SolverOptions()
    prob = _Problem(x, w, spec.groups, spec.penalized, opts.standardize)
    if spec.lam == 0 and prob.p >= prob.n:
        warnings.warn("unpenalised fit with p >= N; the MLE may not exist", RuntimeWarning)
    b = _initial(prob, opts)
    out = _solve(prob, spec.lam, spec.alpha, b, opts)
    return _result(prob, spec.lam, spec.alpha, *out, opts)


def fit_path(x: DesignMatrix, w, alpha: float, lambdas, opts: SolverOptions | None = None,
             groups=None, penalized=None, stop_on_divergence: bool = True) -> list[FitResult]:
    """Fit a decreasing sequence of ``lambdas`` with warm starts.

    Below some ``lam`` the objective can be unbounded (IPCW weights above one
    allow separation).  With ``stop_on_divergence`` the path ends at the
    first diverged fit, so the returned list may be shorter than ``lambdas``.
    """
    opts = opts or SolverOptions()
    groups = x.groups if groups is None else groups
    penalized = x.penalized if penalized is None else penalized
    prob = _Problem(x, w, groups, penalized, opts.standardize)
    b = _initial(prob, opts)
    fits = []
    for lam in lambdas:
        out = _solve(prob, float(lam), alpha, b, opts)
        res = _result(prob, float(lam), alpha, *out, opts)
        fits.append(res)
        if res.diverged and stop_on_divergence:
            break
        b = out[0]
    return fits


def _group_threshold(g, alpha):
    """Smallest lam with |soft(g, lam*alpha)|_2 <= lam*(1-alpha), by bisection."""
    g = np.abs(np.asarray(g, dtype=float))
    if not g.any():
        return 0.0
    if alpha >= 1.0:
        return float(g.max())
    if alpha <= 0.0:
        return float(np.linalg.norm(g))

    def excess(lam):
        return np.linalg.norm(np.maximum(g - lam * alpha, 0.0)) - lam * (1 - alpha)

    lo, hi = 0.0, min(g.max() / alpha, np.linalg.norm(g) / (1 - alpha))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return float(hi)


def lambda_max(x: DesignMatrix, w, alpha: float, standardize: bool = True,
               groups=None, penalized=None) -> float:
    """Smallest ``lam`` at which every penalised coefficient is zero."""
    groups = x.groups if groups is None else groups
    penalized = x.penalized if penalized is None else penalized
    prob = _Problem(x, w, groups, penalized, standardize)
    b = prob.start()
    if prob.null_intercept() is None:
        raise ValueError("intercept-only model has no finite solution (mean weight outside (0, 1))")
    g = prob.grad(prob.X @ b)
    return max((_group_threshold(g[grp], alpha) for grp in prob.layout.groups), default=0.0)


def lambda_path(x: DesignMatrix, w, alpha: float, n_lambda: int = 100, ratio: float | None = None,
                standardize: bool = True) -> np.ndarray:
    """Log-spaced decreasing grid from ``lambda_max`` to ``ratio * lambda_max``.

    The default ``ratio`` is ``1e-4`` when ``N > p`` and ``1e-2`` otherwise.
    """
    if n_lambda < 1:
        raise ValueError("n_lambda must be at least 1")
    X = _as_matrix(x)
    if ratio is None:
        ratio = 1e-4 if X.shape[0] > X.shape[1] else 1e-2
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    lmax = lambda_max(x, w, alpha, standardize)
    if n_lambda == 1:
        return np.array([lmax])
    return lmax * np.geomspace(1.0, ratio, n_lambda)


def predict_prob(fit: FitResult | np.ndarray, x) -> np.ndarray | float:
    """Fitted probability ``exp(x'b) / (1 + exp(x'b))``."""
    beta = fit.beta if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    X = _as_matrix(x)
    out = expit(X @ beta)
    return float(out) if np.ndim(out) == 0 else out
