"""Survival datasets with lagged mixed-frequency covariate panels.

A dataset holds, for every unit, the observed time ``T~ = min(T, C)``, the
event flag ``delta = 1{T <= C}`` and a ``K x d`` panel of lagged covariates
where lag 1 is the most recent observation.  Times are fractional years.
"""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ParseError, SchemaError

logger = logging.getLogger(__name__)

_LAG_RE = re.compile(r"^(?P<name>.+)_lag(?P<lag>\d+)$")

DEFAULT_SCHEMA = {"id": "id", "time": "time", "status": "status"}


@dataclass(frozen=True)
class SurvivalRecord:
    """One unit: observed time, event flag and its ``K x d`` lag panel."""

    id: str
    tilde_t: float
    delta: int
    panel: np.ndarray


@dataclass(frozen=True)
class HorizonConfig:
    t: float
    s: float

    def __post_init__(self):
        if not self.t > self.s:
            raise ValueError(f"horizon t={self.t} must exceed conditioning age s={self.s}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of survival records sharing ``(K, d)``.

    Parameters
    ----------
    ids : array of str, shape (N,)
    time : array of float, shape (N,)
        Observed times ``T~``; every entry is at least ``s``.
    status : array of int, shape (N,)
        Event indicators ``delta`` in {0, 1}.
    panel : array of float, shape (N, K, d)
        ``panel[i, k, j]`` is covariate ``k`` of unit ``i`` at lag ``j + 1``.
    s : float
        Conditioning age in years.
    m : int
        Observations per year.
    covariate_names : tuple of str
    reporting_delay : bool
        If true the most recent lag is unavailable and ``d = s*m - 1``.
    """

    ids: np.ndarray
    time: np.ndarray
    status: np.ndarray
    panel: np.ndarray
    s: float
    m: int
    covariate_names: tuple = ()
    reporting_delay: bool = False
    excluded: tuple = field(default=(), compare=False)

    def __post_init__(self):
        ids = np.asarray(self.ids).astype(str)
        time = np.asarray(self.time, dtype=float)
        status = np.asarray(self.status).astype(int)
        panel = np.asarray(self.panel, dtype=float)
        if panel.ndim != 3:
            raise SchemaError(f"panel must be 3-d (N, K, d), got shape {panel.shape}")
        n = panel.shape[0]
        if not (ids.shape == time.shape == status.shape == (n,)):
            raise SchemaError("ids, time, status and panel disagree on the number of units")
        if n < 1:
            raise SchemaError("dataset must contain at least one unit")
        if not np.all(np.isin(status, (0, 1))):
            raise SchemaError("status must be 0 or 1")
        if not np.all(np.isfinite(panel)):
            raise SchemaError("panel contains missing or non-finite entries")
        if not np.all(np.isfinite(time)):
            raise SchemaError("time contains non-finite entries")
        if np.any(time < self.s):
            raise SchemaError("all units must satisfy time >= s")
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(panel.shape[1]))
        if len(names) != panel.shape[1]:
            raise SchemaError("covariate_names length does not match K")
        for arr in (ids, time, status, panel):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "panel", panel)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.panel.shape[0]

    @property
    def k(self) -> int:
        return self.panel.shape[1]

    @property
    def d(self) -> int:
        return self.panel.shape[2]

    @property
    def records(self) -> list[SurvivalRecord]:
        return [
            SurvivalRecord(self.ids[i], float(self.time[i]), int(self.status[i]), self.panel[i])
            for i in range(self.n)
        ]

    def event_indicator(self, t: float) -> np.ndarray:
        """Vectorised :func:`event_indicator` over all units."""
        return _event_indicator(self.time, self.status, t)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.ids[index],
            self.time[index],
            self.status[index],
            self.panel[index],
            self.s,
            self.m,
            self.covariate_names,
            self.reporting_delay,
        )

    def with_panel(self, panel) -> "Dataset":
        return Dataset(self.ids, self.time, self.status, panel, self.s, self.m,
                       self.covariate_names, self.reporting_delay)


def _event_indicator(time, status, t):
    time = np.asarray(time, dtype=float)
    status = np.asarray(status)
    failed = time <= t
    # observation indicator 1{C >= t ^ T}
    observed = 1 - failed * (1 - status)
    return (observed * failed).astype(int)


def event_indicator(rec: SurvivalRecord, t: float) -> int:
    """Observed failure status ``delta(t) * 1{T~ <= t}`` of one unit.

    Units censored before ``t`` have unknown status and get 0.
    """
    return int(_event_indicator(rec.tilde_t, rec.delta, t))


def lag_count(s: float, m: int, reporting_delay: bool = False) -> int:
    d = s * m
    if abs(d - round(d)) > 1e-9:
        raise ValueError(f"s*m must be an integer, got {d}")
    return int(round(d)) - int(reporting_delay)


def _lag_indices(s, m, reporting_delay):
    full = lag_count(s, m)
    return list(range(2 if reporting_delay else 1, full + 1))


def load_dataset(
    path,
    s: float,
    m: int,
    schema: Mapping[str, str] | None = None,
    covariates: Sequence[str] | None = None,
    reporting_delay: bool = False,
) -> Dataset:
    """Read a survival dataset from CSV.

    The file has a header row with an id column, a time column, a status
    column and ``<name>_lag<j>`` columns for ``j = 1..s*m``.  Lines starting
    with ``#`` are comments.  Rows with ``time < s`` are excluded and logged.

    Parameters
    ----------
    path : path-like
    s, m : conditioning age and observation frequency.
    schema : mapping, optional
        Maps the keys ``id``, ``time``, ``status`` to column names.
    covariates : sequence of str, optional
        Covariate names to read; inferred from the header when omitted.
    reporting_delay : bool
        Drop the most recent lag, leaving ``d = s*m - 1`` columns per
        covariate (lags ``2..s*m``).
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    col = {name: i for i, name in enumerate(header)}
    for key in ("id", "time", "status"):
        if schema[key] not in col:
            raise SchemaError(f"{path}: missing column {schema[key]!r}")

    if covariates is None:
        seen = []
        for h in header:
            mt = _LAG_RE.match(h)
            if mt and mt.group("name") not in seen:
                seen.append(mt.group("name"))
        covariates = seen
    if not covariates:
        raise SchemaError(f"{path}: no <name>_lag<j> columns found")
    lags = _lag_indices(s, m, reporting_delay)
    lag_cols = []
    for name in covariates:
        for j in lags:
            cname = f"{name}_lag{j}"
            if cname not in col:
                raise SchemaError(f"{path}: missing column {cname!r}")
            lag_cols.append(col[cname])

    body = rows[1:]
    n_raw = len(body)
    ids = []
    time = np.empty(n_raw)
    status = np.empty(n_raw, dtype=int)
    values = np.empty((n_raw, len(lag_cols)))

    def number(row_no, cname, text):
        text = text.strip()
        try:
            if text == "":
                raise ValueError
            v = float(text)
        except ValueError:
            raise ParseError(
                f"{path}: row {row_no}, column {cname!r}: cannot parse {text!r}",
                row=row_no, column=cname,
            ) from None
        if not np.isfinite(v):
            raise ParseError(f"{path}: row {row_no}, column {cname!r}: non-finite value",
                             row=row_no, column=cname)
        return v

    for r, row in enumerate(body):
        row_no = r + 2  # 1-based, header is row 1
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        ids.append(row[col[schema["id"]]].strip())
        time[r] = number(row_no, schema["time"], row[col[schema["time"]]])
        st = number(row_no, schema["status"], row[col[schema["status"]]])
        if st not in (0.0, 1.0):
            raise ParseError(f"{path}: row {row_no}: status must be 0 or 1, got {st}",
                             row=row_no, column=schema["status"])
        status[r] = int(st)
        for c, ci in enumerate(lag_cols):
            values[r, c] = number(row_no, header[ci], row[ci])

    keep = time >= s
    excluded = tuple(np.asarray(ids, dtype=str)[~keep])
    if excluded:
        logger.warning("excluded %d row(s) with time < s=%g: %s", len(excluded), s,
                       ", ".join(excluded))
    panel = values.reshape(n_raw, len(covariates), len(lags))
    return Dataset(
        np.asarray(ids, dtype=str)[keep],
        time[keep],
        status[keep],
        panel[keep],
        s,
        m,
        tuple(covariates),
        reporting_delay,
        excluded=excluded,
    )


def save_dataset(ds: Dataset, path, header_comment: str | None = None) -> None:
    """Write a dataset in the CSV layout read by :func:`load_dataset`.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    lags = _lag_indices(ds.s, ds.m, ds.reporting_delay)
    if len(lags) != ds.d:
        lags = list(range(1, ds.d + 1))
    cols = ["id", "time", "status"] + [f"{n}_lag{j}" for n in ds.covariate_names for j in lags]
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        flat = ds.panel.reshape(ds.n, -1)
        for i in range(ds.n):
            w.writerow([ds.ids[i], repr(float(ds.time[i])), int(ds.status[i])]
                       + [repr(float(v)) for v in flat[i]])
