"""Kaplan-Meier estimate of the censoring survival and IPCW outcome weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, _event_indicator
from .exceptions import InsufficientFollowUpError


@dataclass(frozen=True)
class StepSurvival:
    """Left-continuous step function ``H(u) = P(C >= u | C >= s)``.

    ``values[k]`` is the survival just after ``jump_times[k]``; evaluation at
    ``u`` only applies jumps at times strictly below ``u``.
    """

    jump_times: np.ndarray
    values: np.ndarray
    origin: float

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        # number of jumps strictly before u
        idx = np.searchsorted(self.jump_times, u, side="left")
        out = np.concatenate(([1.0], self.values))[idx]
        return out if out.ndim else float(out)

    def to_rows(self):
        """``(time, survival)`` rows including the origin."""
        return [(self.origin, 1.0)] + list(zip(self.jump_times.tolist(), self.values.tolist()))


def fit_censoring_km(ds: Dataset | None = None, *, time=None, status=None) -> StepSurvival:
    """Product-limit estimator treating censorings (``status == 0``) as events.

    The risk set at ``u`` is ``#{i : T~_i >= u}`` so a failure tied with a
    censoring stays in the risk set of that censoring.
    """
    if ds is not None:
        time, status, origin = ds.time, ds.status, ds.s
    else:
        time = np.asarray(time, dtype=float)
        status = np.asarray(status)
        origin = float(time.min()) if time.size else 0.0
    cens_times = np.unique(time[status == 0])
    if cens_times.size == 0:
        return StepSurvival(np.empty(0), np.empty(0), origin)
    sorted_t = np.sort(time)
    at_risk = time.size - np.searchsorted(sorted_t, cens_times, side="left")
    cens_sorted = np.sort(time[status == 0])
    n_cens = (np.searchsorted(cens_sorted, cens_times, side="right")
              - np.searchsorted(cens_sorted, cens_times, side="left"))
    values = np.cumprod(1.0 - n_cens / at_risk)
    return StepSurvival(cens_times, values, origin)


@dataclass(frozen=True)
class IpcwWeights:
    weights: np.ndarray
    horizon: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return len(self.weights)


def check_follow_up(time, t: float) -> None:
    if not np.any(np.asarray(time) >= t):
        raise InsufficientFollowUpError(
            f"no unit is observed up to t={t}; sufficient follow-up P(T~ >= t) > 0 fails"
        )


def ipcw_weights(ds: Dataset, km: StepSurvival, t: float) -> IpcwWeights:
    """Outcome weights ``delta(t) 1{T~ <= t} / H(t ^ T~)``."""
    return ipcw_weights_arrays(ds.time, ds.status, km, t)


def ipcw_weights_arrays(time, status, km: StepSurvival, t: float) -> IpcwWeights:
    time = np.asarray(time, dtype=float)
    ind = _event_indicator(time, status, t)
    w = np.zeros(time.shape)
    need = ind == 1
    if np.any(need):
        h = np.atleast_1d(km(np.minimum(t, time[need])))
        if np.any(h <= 0):
            raise InsufficientFollowUpError(
                f"censoring survival estimate is zero at a needed point before t={t}; "
                "sufficient follow-up P(T~ >= t) > 0 fails"
            )
        w[need] = 1.0 / h
    return IpcwWeights(w, float(t))


def estimate_weights(ds: Dataset, t: float) -> IpcwWeights:
    """Fit the censoring KM on ``ds`` and return its IPCW weights at ``t``."""
    return ipcw_weights(ds, fit_censoring_km(ds), t)
