import logging

import numpy as np
import pytest

from survmidas.data import (Dataset, HorizonConfig, SurvivalRecord, event_indicator, lag_count,
                            load_dataset, save_dataset)
from survmidas.exceptions import ParseError, SchemaError


def _write(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")


def _header(k=2, d=4):
    return ["id", "time", "status"] + [f"x{c}_lag{j}" for c in range(1, k + 1) for j in range(1, d + 1)]


def test_load_three_rows(tmp_path):
    p = tmp_path / "d.csv"
    rows = [[f"a{i}", 2.0 + i, i % 2] + list(np.arange(8) + i) for i in range(3)]
    _write(p, _header(), rows)
    ds = load_dataset(p, s=1, m=4)
    assert (ds.n, ds.k, ds.d) == (3, 2, 4)
    assert ds.covariate_names == ("x1", "x2")
    assert ds.panel[1, 1, 0] == 5.0  # x2_lag1 of row a1


def test_rows_below_s_are_excluded_with_warning(tmp_path, caplog):
    p = tmp_path / "d.csv"
    rows = [["a", 1.5, 1] + [0] * 8, ["b", 0.5, 0] + [0] * 8, ["c", 3, 0] + [0] * 8]
    _write(p, _header(), rows)
    with caplog.at_level(logging.WARNING):
        ds = load_dataset(p, s=1, m=4)
    assert ds.n == 2
    assert ds.excluded == ("b",)
    assert "b" in caplog.text


def test_missing_cell_names_row_and_column(tmp_path):
    p = tmp_path / "d.csv"
    rows = [["a", 2, 1] + [0] * 8, ["b", 2, 0] + [0, 0, "", 0, 0, 0, 0, 0]]
    _write(p, _header(), rows)
    with pytest.raises(ParseError) as info:
        load_dataset(p, s=1, m=4)
    assert info.value.row == 3
    assert info.value.column == "x1_lag3"


def test_non_numeric_cell(tmp_path):
    p = tmp_path / "d.csv"
    _write(p, _header(), [["a", "soon", 1] + [0] * 8])
    with pytest.raises(ParseError) as info:
        load_dataset(p, s=1, m=4)
    assert info.value.column == "time"


def test_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    header = _header()
    header.remove("x2_lag4")
    _write(p, header, [["a", 2, 1] + [0] * 7])
    with pytest.raises(SchemaError, match="x2_lag4"):
        load_dataset(p, s=1, m=4)


def test_reporting_delay_drops_most_recent_lag(tmp_path):
    p = tmp_path / "d.csv"
    _write(p, _header(k=1, d=4), [["a", 2, 1, 10, 20, 30, 40]])
    ds = load_dataset(p, s=1, m=4, reporting_delay=True)
    assert ds.d == 3 == lag_count(1, 4, True)
    assert ds.panel[0, 0].tolist() == [20, 30, 40]


def test_round_trip_is_bit_exact(tmp_path, small_ds):
    p = tmp_path / "rt.csv"
    save_dataset(small_ds, p, header_comment="fixture")
    back = load_dataset(p, small_ds.s, small_ds.m)
    assert np.array_equal(back.time, small_ds.time)
    assert np.array_equal(back.status, small_ds.status)
    assert np.array_equal(back.panel, small_ds.panel)
    assert list(back.ids) == list(small_ds.ids)


def test_row_permutation_keeps_partition(tmp_path):
    rows = [[f"u{i}", 0.5 + 0.3 * i, i % 2] + [i] * 8 for i in range(8)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _write(a, _header(), rows)
    _write(b, _header(), rows[::-1])
    da, db = load_dataset(a, 1, 4), load_dataset(b, 1, 4)
    assert sorted(da.ids) == sorted(db.ids)
    assert sorted(da.excluded) == sorted(db.excluded)


@pytest.mark.parametrize("tt, delta, t, expected", [(7, 1, 8, 1), (9, 0, 8, 0), (7, 0, 8, 0),
                                                    (8, 1, 8, 1), (9, 1, 8, 0)])
def test_event_indicator(tt, delta, t, expected):
    rec = SurvivalRecord("x", tt, delta, np.zeros((1, 1)))
    assert event_indicator(rec, t) == expected


def test_event_indicator_implies_observed_failure(small_ds, small_t):
    ind = small_ds.event_indicator(small_t)
    assert np.all(small_ds.status[ind == 1] == 1)
    assert np.all(small_ds.time[ind == 1] <= small_t)


def test_dataset_validation():
    with pytest.raises(SchemaError):
        Dataset(["a"], [2.0], [2], np.zeros((1, 1, 4)), 1, 4)
    with pytest.raises(SchemaError):
        Dataset(["a"], [0.5], [1], np.zeros((1, 1, 4)), 1, 4)
    with pytest.raises(SchemaError):
        Dataset(["a"], [2.0], [1], np.full((1, 1, 4), np.nan), 1, 4)
    ds = Dataset(["a"], [2.0], [1], np.zeros((1, 1, 4)), 1, 4)
    with pytest.raises(ValueError):
        ds.time[0] = 3.0


def test_horizon_config():
    HorizonConfig(t=8, s=6)
    with pytest.raises(ValueError):
        HorizonConfig(t=6, s=6)
