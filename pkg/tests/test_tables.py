import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pulseswitch.tables import read_table, write_table


@given(st.lists(st.lists(st.floats(allow_nan=False, width=64), min_size=3, max_size=3),
                min_size=1, max_size=8))
def test_round_trip_is_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("t") / "x.csv"
    write_table(path, ["a", "b", "c"], rows, {"k": 1})
    meta, cols, data = read_table(path)
    assert meta == {"k": 1} and cols == ["a", "b", "c"]
    assert np.array_equal(data, np.array(rows, dtype=float))


def test_format(tmp_path):
    path = write_table(tmp_path / "f.csv", ["x", "ok"], [[0.1, True], [math.inf, False]],
                       {"b": np.float64(2.0), "a": np.arange(2)})
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.decode().splitlines() == ['# {"a": [0, 1], "b": 2.0}', "x,ok",
                                         "0.10000000000000001,1", "inf,0"]


def test_empty_and_bad_rows(tmp_path):
    write_table(tmp_path / "e.csv", ["x", "y"], [])
    assert read_table(tmp_path / "e.csv")[2].shape == (0, 2)
    with pytest.raises(ValueError):
        write_table(tmp_path / "b.csv", ["x", "y"], [[1.0]])
    assert not (tmp_path / "b.csv").exists()
    assert [p.name for p in tmp_path.iterdir()] == ["e.csv"]
