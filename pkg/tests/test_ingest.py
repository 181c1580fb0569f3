import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amdcast.errors import ColumnMismatch, DataError, DuplicateTimestamp, NegativeUnderLog, ParseError, TooShort
from amdcast.ingest import (
    PARAMETERS,
    SplitSpec,
    TransformKind,
    apply_scaler,
    chrono_split,
    cyclic_encode,
    fit_scaler,
    invert_scaler,
    load_csv,
    make_windows,
    split_count,
    write_csv,
)

from conftest import make_frame

HEADER = "date," + ",".join(PARAMETERS)


def _write(path, lines):
    path.write_text("\n".join([HEADER, *lines]) + "\n", encoding="utf-8")
    return path


def _row(day, base=1.0):
    return f"{day}," + ",".join(str(base + k) for k in range(7))


def test_load_weekly_shape(tmp_path):
    start = dt.date(2021, 2, 9)
    lines = [_row((start + dt.timedelta(days=7 * k)).isoformat(), k) for k in range(83)]
    frame = load_csv(_write(tmp_path / "w.csv", lines))
    assert len(frame) == 83
    assert frame.values.shape == (83, 7)
    assert frame.columns == PARAMETERS


def test_load_sorts_rows(tmp_path):
    frame = load_csv(_write(tmp_path / "w.csv", [_row("2021-03-01", 3), _row("2021-01-01", 1), _row("2021-02-01", 2)]))
    assert [d.month for d in frame.dates] == [1, 2, 3]
    np.testing.assert_array_equal(frame.column("pH"), [1, 2, 3])


def test_parse_error_names_row_and_column(tmp_path):
    lines = [_row(f"2021-01-0{k}") for k in range(1, 8)]
    cells = lines[4].split(",")
    cells[1 + PARAMETERS.index("Fe")] = "abc"
    lines[4] = ",".join(cells)
    with pytest.raises(ParseError) as info:
        load_csv(_write(tmp_path / "w.csv", lines))
    assert (info.value.row, info.value.column, info.value.value) == (5, "Fe", "abc")


def test_duplicate_dates(tmp_path):
    with pytest.raises(DuplicateTimestamp):
        load_csv(_write(tmp_path / "w.csv", [_row("2021-01-01"), _row("2021-01-01")]))


def test_bad_header(tmp_path):
    (tmp_path / "w.csv").write_text("date,a,b\n2021-01-01,1,2\n")
    with pytest.raises(ColumnMismatch):
        load_csv(tmp_path / "w.csv")


def test_missing_cells_and_roundtrip(tmp_path):
    lines = [_row("2021-01-01"), "2021-01-02,1.5,,3,4,5,6,7"]
    frame = load_csv(_write(tmp_path / "w.csv", lines))
    assert math.isnan(frame.values[1, 1])
    write_csv(frame, tmp_path / "again.csv")
    again = load_csv(tmp_path / "again.csv")
    np.testing.assert_array_equal(again.values, frame.values)
    assert again.dates == frame.dates


def test_cyclic_encode_points():
    s, c = cyclic_encode([dt.date(2022, 1, 1)])
    assert (s[0], c[0]) == (0.0, 1.0)
    s, c = cyclic_encode([dt.date(2022, 4, 2)])
    assert s[0] == pytest.approx(1.0, abs=1e-3)
    assert c[0] == pytest.approx(0.0, abs=2e-2)


@settings(max_examples=100, deadline=None)
@given(st.dates(min_value=dt.date(1990, 1, 1), max_value=dt.date(2100, 12, 31)))
def test_cyclic_unit_circle(day):
    s, c = cyclic_encode([day])
    assert abs(s[0] ** 2 + c[0] ** 2 - 1.0) <= 1e-12


def _one_column_frame(values, kind):
    frame = make_frame(np.column_stack([values] * 7))
    return frame, fit_scaler(frame, {name: kind for name in PARAMETERS})


def test_minmax_hand_values():
    frame, sc = _one_column_frame([2.0, 4.0, 10.0], TransformKind.MINMAX)
    assert (sc.mins[0], sc.maxs[0]) == (2.0, 10.0)
    np.testing.assert_allclose(apply_scaler(sc, frame).column("pH"), [0.0, 0.25, 1.0])


def test_constant_column_maps_to_zero():
    frame, sc = _one_column_frame([5.0, 5.0, 5.0], TransformKind.MINMAX)
    assert sc.mins[0] == sc.maxs[0] == 5.0
    np.testing.assert_array_equal(apply_scaler(sc, frame).column("pH"), [0.0, 0.0, 0.0])


def test_log1p_endpoints():
    frame, sc = _one_column_frame([0.0, math.e - 1.0], TransformKind.LOG1P_MINMAX)
    assert sc.mins[0] == 0.0
    assert sc.maxs[0] == pytest.approx(1.0, abs=1e-15)


def test_invert_hand_value():
    frame, sc = _one_column_frame([0.0, 10.0], TransformKind.MINMAX)
    assert sc.inverse(np.full((1, 7), 0.5))[0, 0] == 5.0


def test_default_transforms():
    frame = make_frame(np.arange(1.0, 22.0).reshape(3, 7))
    kinds = dict(zip(PARAMETERS, fit_scaler(frame).kinds))
    assert kinds["pH"] is TransformKind.MINMAX and kinds["ORP"] is TransformKind.MINMAX
    assert all(kinds[p] is TransformKind.LOG1P_MINMAX for p in PARAMETERS[2:])


def test_negative_under_log():
    frame = make_frame(np.array([[1.0] * 7, [2.0] * 6 + [-1.0]]))
    with pytest.raises(NegativeUnderLog):
        fit_scaler(frame)


def test_scaler_dict_roundtrip():
    frame = make_frame(np.random.default_rng(0).uniform(1, 50, (10, 7)))
    sc = fit_scaler(frame)
    assert type(sc).from_dict(sc.to_dict()) == sc


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (12, 7), elements=st.floats(0.0, 1e4, allow_nan=False)))
def test_scaling_roundtrip(values):
    frame = make_frame(values)
    sc = fit_scaler(frame)
    back = invert_scaler(sc, apply_scaler(sc, frame)).values
    const = np.ptp(values, axis=0) == 0
    np.testing.assert_allclose(back[:, ~const], values[:, ~const], rtol=1e-9, atol=1e-9)
    scaled = apply_scaler(sc, frame).values
    assert np.all(scaled >= -1e-12) and np.all(scaled <= 1 + 1e-12)


@pytest.mark.parametrize("window,count", [(7, 76), (14, 69), (28, 55), (0, 83)])
def test_window_counts(window, count):
    assert len(make_windows(make_frame(np.ones((83, 7)), step_days=7), window)) == count


def test_window_too_short():
    with pytest.raises(TooShort):
        make_windows(make_frame(np.ones((7, 7))), 7)


def test_window_rejects_missing():
    v = np.ones((20, 7))
    v[3, 2] = np.nan
    with pytest.raises(DataError):
        make_windows(make_frame(v), 5)


def test_windows_never_see_the_future():
    n = 40
    frame = make_frame(np.repeat(np.arange(n, dtype=float)[:, None], 7, axis=1))
    ds = make_windows(frame, 7)
    for k in range(len(ds)):
        assert ds.past[k, :, 0].max() < ds.targets[k, 0]
        assert ds.target_dates[k] == frame.dates[int(ds.targets[k, 0])]
        np.testing.assert_array_equal(ds.past[k, :, 0], np.arange(k, k + 7))


@pytest.mark.parametrize("n,frac,train", [(76, 0.7, 53), (10, 0.8, 8), (69, 0.7, 48), (55, 0.7, 38)])
def test_split_floor(n, frac, train):
    assert split_count(n, frac) == train
    ds = make_windows(make_frame(np.ones((n + 7, 7))), 7)
    a, b = chrono_split(ds, SplitSpec(frac))
    assert (len(a), len(b)) == (train, n - train)


@pytest.mark.parametrize("frac", [0.0, 1.0, 1.2])
def test_split_fraction_invalid(frac):
    with pytest.raises(ValueError):
        SplitSpec(frac)


def test_split_concatenation_is_identity(rng):
    ds = make_windows(make_frame(rng.uniform(size=(50, 7))), 5)
    a, b = chrono_split(ds, SplitSpec(0.7))
    np.testing.assert_array_equal(np.concatenate([a.past, b.past]), ds.past)
    np.testing.assert_array_equal(np.concatenate([a.targets, b.targets]), ds.targets)
    assert a.target_dates + b.target_dates == ds.target_dates
