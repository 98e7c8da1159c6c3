import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privrobust.errors import ParseError
from privrobust.io import (
    fmt_value,
    format_matrix,
    format_samples,
    format_table,
    parse_samples,
    read_alphabet,
    read_matrix,
    read_samples,
    read_table,
    write_samples,
)
from privrobust.prob import Alphabet, SampleSet, empirical, new_joint, new_mechanism, sample


def test_first_appearance_order():
    ss = parse_samples("s,x\nb,u\na,v\nb,v\n")
    assert ss.s_alphabet.labels == ("b", "a")
    assert ss.x_alphabet.labels == ("u", "v")
    assert ss.pairs == [(0, 0), (1, 1), (0, 1)]


def test_explicit_alphabet(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("a\nb\nc\n")
    ss = parse_samples("s,x\nb,u\n", read_alphabet(path))
    assert ss.s_alphabet.labels == ("a", "b", "c")
    assert empirical(ss).mass.tolist() == [[0.0], [1.0], [0.0]]


@pytest.mark.parametrize(
    "text,line",
    [
        ("", 1),
        ("a,b\n1,2\n", 1),
        ("s,x\na,b\nc\n", 3),
        ("s,x\na,b\n,b\n", 3),
        ("s,x\n", 1),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as err:
        parse_samples(text, source="data.csv")
    assert err.value.line == line
    assert f"data.csv:{line}:" in str(err.value)


def test_label_outside_alphabet():
    with pytest.raises(ParseError, match="not in the supplied alphabet"):
        parse_samples("s,x\nz,u\n", Alphabet(("a",)))


def test_samples_round_trip(tmp_path):
    ss = sample(new_joint([[0.42, 0.18], [0.16, 0.24]]), 300, 4)
    path = tmp_path / "out.csv"
    write_samples(path, ss)
    back = read_samples(path, ss.s_alphabet, ss.x_alphabet)
    assert back.pairs == ss.pairs


@given(st.floats(allow_nan=True, allow_infinity=True))
@settings(max_examples=200)
def test_float_text_round_trip(v):
    text = fmt_value(v)
    back = float(text)
    assert (math.isnan(v) and math.isnan(back)) or back == v


def test_table_round_trip():
    rows = [{"a": 1, "b": 0.1, "c": True}, {"a": 2, "b": math.nan, "c": None}]
    parsed = read_table(format_table(("a", "b", "c"), rows), is_text=True)
    assert parsed[0] == {"a": "1", "b": "0.1", "c": "true"}
    assert parsed[1]["b"] == "nan" and parsed[1]["c"] == ""


def test_matrix_round_trip(tmp_path):
    w = new_mechanism([[0.9, 0.1], [1 / 3, 2 / 3]], ["a", "b"])
    path = tmp_path / "w.csv"
    path.write_text(format_matrix(w))
    labels, rows = read_matrix(path)
    assert labels == ["a", "b"]
    np.testing.assert_array_equal(rows, w.rows)


def test_bundled_dataset():
    from importlib.resources import files

    ss = read_samples(files("privrobust") / "data" / "synthetic_2x2.csv")
    assert len(ss) == 2000
    assert sorted(ss.s_alphabet.labels) == ["s0", "s1"]
