"""Extraction of a complete sub-dataset from a raw panel with missing cells.

Units younger than ``s`` are dropped first, leaving ``N`` units and ``p``
lag columns.  A grid of thresholds ``(a, b)`` is then swept; each cell

1. deletes units with at least ``b`` missing cells,
2. deletes every covariate (all its lags) whose missing-count statistic
   ``M2`` is at least ``a``,
3. deletes the units that still have a missing cell.

A cell is admissible when it keeps at least half the units and half the
columns.  Among admissible cells the one with the most observed failures
wins.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DEFAULT_SCHEMA, Dataset, _LAG_RE
from .exceptions import ExtractionError, ParseError, SchemaError

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})


@dataclass(frozen=True, eq=False)
class RawPanel:
    """Unit panel where any covariate cell may be missing.

    ``values[i, k, j]`` is covariate ``k`` at lag ``j + 1``; ``missing`` has
    the same shape and marks absent cells.  Values under the mask are
    ignored.
    """

    ids: np.ndarray
    time: np.ndarray
    status: np.ndarray
    values: np.ndarray
    missing: np.ndarray
    names: tuple = ()
    m: int = 4

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        missing = np.asarray(self.missing, dtype=bool)
        if values.ndim != 3 or values.shape != missing.shape:
            raise SchemaError("values and missing must share a 3-d (N, K, d) shape")
        n = values.shape[0]
        ids = np.asarray(self.ids).astype(str)
        time = np.asarray(self.time, dtype=float)
        status = np.asarray(self.status).astype(int)
        if not ids.shape == time.shape == status.shape == (n,):
            raise SchemaError("ids, time, status and values disagree on the number of units")
        if not np.all(np.isin(status, (0, 1))):
            raise SchemaError("status must be 0 or 1")
        if not np.all(np.isfinite(values[~missing])):
            raise SchemaError("non-finite value outside the missingness mask")
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise SchemaError("names length does not match K")
        values = np.where(missing, 0.0, values)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def take(self, index) -> "RawPanel":
        return RawPanel(self.ids[index], self.time[index], self.status[index],
                        self.values[index], self.missing[index], self.names, self.m)


@dataclass(frozen=True)
class SubdatasetChoice:
    """One grid cell and the dimensions it produces."""

    a: int
    b: int
    n_ab: int
    p_ab: int
    uncensored: int
    admissible: bool
    selected: bool = False

    def as_row(self) -> dict:
        return {"a": self.a, "b": self.b, "n_ab": self.n_ab, "p_ab": self.p_ab,
                "uncensored": self.uncensored, "admissible": int(self.admissible),
                "selected": int(self.selected)}


def threshold_grid(start: int, step: int, stop: int) -> list[int]:
    """``start, start+step, ...`` below ``stop``, closed by ``stop`` itself."""
    if step < 1:
        raise ValueError("step must be positive")
    grid = list(range(start, stop, step)) if start < stop else []
    grid.append(stop)
    return grid


def missing_counts(raw: RawPanel, m2_rule: str = "min"):
    """Per-unit missing counts ``M1`` and per-covariate statistic ``M2``.

    ``M2[k]`` summarises the per-lag-column missing counts of covariate
    ``k`` by their minimum (``m2_rule="min"``) or maximum.
    """
    if m2_rule not in ("min", "max"):
        raise ValueError(f"m2_rule must be 'min' or 'max', got {m2_rule!r}")
    m1 = raw.missing.reshape(raw.n, -1).sum(axis=1)
    per_col = raw.missing.sum(axis=0)  # (K, d)
    m2 = per_col.min(axis=1) if m2_rule == "min" else per_col.max(axis=1)
    return m1, m2


def _cell(raw, m1, m2, a, b):
    units = m1 < b
    keep_k = m2 < a
    rest = raw.missing[units][:, keep_k, :]
    complete = ~rest.any(axis=(1, 2))
    rows = np.flatnonzero(units)[complete]
    return rows, np.flatnonzero(keep_k)


def extract_subdataset(raw: RawPanel, s: float, c1: int = 25, c2: int = 25, l: int = 50,
                       m2_rule: str = "min", n_jobs: int = 1):
    """Select the complete sub-dataset with the most observed failures.

    Parameters
    ----------
    raw : RawPanel
    s : float
        Conditioning age; units with ``time < s`` are removed first.
    c1, c2 : int
        First thresholds for ``a`` (covariate rule) and ``b`` (unit rule).
    l : int
        Grid step for both thresholds.
    m2_rule : {"min", "max"}
        How the per-column missing counts of a covariate are summarised.

    Returns
    -------
    dataset : Dataset
    report : list of SubdatasetChoice
        Every grid cell, in sweep order, with exactly one ``selected``.

    Raises
    ------
    ExtractionError
        When no cell is admissible; the exception carries the report.
    """
    if raw.n == 0:
        raise ValueError("raw panel is empty")
    base = raw.take(np.flatnonzero(raw.time >= s))
    n, p = base.n, base.k * base.d
    if n == 0:
        raise ExtractionError("no unit satisfies time >= s", report=[])
    m1, m2 = missing_counts(base, m2_rule)
    cells = [(a, b) for a in threshold_grid(c1, l, n) for b in threshold_grid(c2, l, p)]

    def evaluate(ab):
        a, b = ab
        rows, ks = _cell(base, m1, m2, a, b)
        n_ab, p_ab = rows.size, ks.size * base.d
        ok = n_ab / n >= 0.5 and p_ab / p >= 0.5
        return SubdatasetChoice(a, b, n_ab, p_ab, int(base.status[rows].sum()), ok)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            report = list(ex.map(evaluate, cells))
    else:
        report = [evaluate(c) for c in cells]

    best = None
    for i, ch in enumerate(report):
        if not ch.admissible:
            continue
        # ties go to more units, then more columns, then the earlier cell
        key = (ch.uncensored, ch.n_ab, ch.p_ab)
        if best is None or key > best[0]:
            best = (key, i)
    if best is None:
        raise ExtractionError(
            f"no admissible (a, b) cell among {len(report)}; every cell keeps fewer than half "
            "the units or columns", report=report)
    i = best[1]
    pick = report[i]
    report[i] = SubdatasetChoice(pick.a, pick.b, pick.n_ab, pick.p_ab, pick.uncensored,
                                 True, True)
    rows, ks = _cell(base, m1, m2, pick.a, pick.b)
    logger.info("selected a=%d b=%d: %d units, %d covariates, %d failures",
                pick.a, pick.b, rows.size, ks.size, pick.uncensored)
    ds = Dataset(base.ids[rows], base.time[rows], base.status[rows],
                 base.values[rows][:, ks, :], s, base.m,
                 tuple(base.names[k] for k in ks))
    return ds, report


def load_raw_panel(path, m: int = 4, schema=None) -> RawPanel:
    """Read a raw panel CSV whose lag cells may be empty or ``NA``.

    Covariates and their lags are inferred from ``<name>_lag<j>`` headers;
    every covariate must carry the same lags ``1..d``.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    col = {h: i for i, h in enumerate(header)}
    for key in ("id", "time", "status"):
        if schema[key] not in col:
            raise SchemaError(f"{path}: missing column {schema[key]!r}")
    lags: dict[str, list[int]] = {}
    for h in header:
        mt = _LAG_RE.match(h)
        if mt:
            lags.setdefault(mt.group("name"), []).append(int(mt.group("lag")))
    if not lags:
        raise SchemaError(f"{path}: no <name>_lag<j> columns found")
    names = list(lags)
    d = max(max(v) for v in lags.values())
    for name in names:
        if sorted(lags[name]) != list(range(1, d + 1)):
            raise SchemaError(f"{path}: covariate {name!r} does not have lags 1..{d}")

    body = rows[1:]
    n = len(body)
    ids, time, status = [], np.empty(n), np.empty(n, dtype=int)
    values = np.zeros((n, len(names), d))
    missing = np.zeros((n, len(names), d), dtype=bool)

    def number(row_no, cname, text):
        try:
            v = float(text)
        except ValueError:
            raise ParseError(f"{path}: row {row_no}, column {cname!r}: cannot parse {text!r}",
                             row=row_no, column=cname) from None
        return v

    for r, row in enumerate(body):
        row_no = r + 2
        row = row + [""] * (len(header) - len(row))
        ids.append(row[col[schema["id"]]].strip())
        time[r] = number(row_no, schema["time"], row[col[schema["time"]]].strip())
        st = number(row_no, schema["status"], row[col[schema["status"]]].strip())
        if st not in (0.0, 1.0):
            raise ParseError(f"{path}: row {row_no}: status must be 0 or 1, got {st}",
                             row=row_no, column=schema["status"])
        status[r] = int(st)
        for k, name in enumerate(names):
            for j in range(d):
                cname = f"{name}_lag{j + 1}"
                text = row[col[cname]].strip()
                if text.lower() in MISSING_TOKENS:
                    missing[r, k, j] = True
                else:
                    values[r, k, j] = number(row_no, cname, text)
    return RawPanel(np.asarray(ids), time, status, values, missing, tuple(names), m)


def save_report(report, path) -> None:
    """Write the grid report as CSV."""
    fields = ["a", "b", "n_ab", "p_ab", "uncensored", "admissible", "selected"]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for ch in report:
            w.writerow(ch.as_row())
