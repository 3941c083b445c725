import pytest
from hypothesis import given
from hypothesis import strategies as st

from otslkit.align import align, align_text
from otslkit.errors import BadGrid
from otslkit.otsl import Token, parse, random_valid, serialize, validate, validate_sequence

# Expected outputs below were traced by hand through the three repair phases.


def test_pad_and_force_n():
    m, log = align(parse("FLNFFNFFNFFNFF"), 5, 2)
    assert serialize(m) == "FLNFFNFFNFFNFFN"
    assert (m.rows, m.cols) == (5, 2)
    assert dict(log.counts) == {"padded": 1, "forced-N": 1}
    assert [e.where for e in log.entries] == [14, 14]


def test_stray_n_becomes_f():
    m, log = align(parse("FNNFFN"), 2, 2)
    assert serialize(m) == "FFNFFN"
    assert [(e.where, e.action) for e in log.entries] == [(1, "N-to-F")]


def test_valid_input_untouched():
    m, log = align(parse("FLNFFN"), 2, 2)
    assert serialize(m) == "FLNFFN"
    assert not log and len(log) == 0


def test_grammar_pass():
    m, log = align(parse("ULNXFN"), 2, 2)
    assert serialize(m) == "FLNFFN"
    assert [(e.where, e.action) for e in log.entries] == [((0, 0), "U-to-F"), ((1, 0), "X-to-F")]


def test_bad_grid():
    with pytest.raises(BadGrid):
        align(parse("FN"), 0, 1)
    with pytest.raises(BadGrid):
        align_text("FN", 1, 0)


def test_trim_tail():
    m, log = align(parse("FFNFFNFFN"), 2, 2)
    assert serialize(m) == "FFNFFN"
    assert [(e.where, e.action) for e in log.entries] == [(6, "trimmed"), (7, "trimmed"), (8, "trimmed")]


def test_repaired_l_legitimises_following_l():
    # (0,0) L -> F; the L at (0,1) now follows an F and stays
    m, log = align(parse("LLN"), 1, 2)
    assert serialize(m) == "FLN"
    assert dict(log.counts) == {"L-to-F": 1}


def test_cross_repair_uses_repaired_neighbours():
    # the U at (1,0) survives, the X at (1,1) sees F above and is replaced
    m, log = align(parse("FFNUXN"), 2, 2)
    assert serialize(m) == "FFNUFN"
    assert [(e.where, e.action) for e in log.entries] == [((1, 1), "X-to-F")]


def test_max_len_caps_before_alignment():
    m, log = align(parse("FLNFFN"), 2, 2, max_len=4)
    assert serialize(m) == "FLNFFN"
    assert dict(log.counts) == {"trimmed": 2, "padded": 2, "forced-N": 1}


class TestAlignText:
    def test_drops_unknown(self):
        m, log = align_text("F?LNFFN", 2, 2)
        assert serialize(m) == "FLNFFN"
        assert [(e.where, e.action) for e in log.entries] == [(1, "dropped-char")]

    def test_same_as_align(self):
        m, log = align_text("FLNFFN", 2, 2)
        assert serialize(m) == "FLNFFN" and not log

    def test_empty(self):
        m, log = align_text("", 1, 1)
        assert m.cells == ((Token.F, Token.N),)
        assert dict(log.counts) == {"padded": 2, "forced-N": 1}

    def test_sentinels(self):
        m, log = align_text("<s>FLNFFN</s>", 2, 2, sentinels=("<s>", "</s>"))
        assert serialize(m) == "FLNFFN" and not log

    def test_log_serialises(self):
        _, log = align_text("UXN?", 1, 2)
        d = log.to_dict()
        assert d["counts"] == {"dropped-char": 1, "U-to-F": 1, "X-to-F": 1}
        assert d["entries"][1]["where"] == [0, 0]


grids = st.integers(1, 12)


@given(st.text(max_size=120), grids, grids)
def test_totality(text, rows, cols):
    m, _ = align_text(text, rows, cols)
    assert validate(m.cells).valid
    assert (m.rows, m.cols) == (rows, cols)
    assert sum(t is Token.N for t in m.tokens()) == rows


@given(st.text(alphabet="FELUXN?x ", max_size=120), grids, grids)
def test_idempotent(text, rows, cols):
    m, _ = align_text(text, rows, cols)
    again, log = align(parse(serialize(m)), rows, cols)
    assert again == m and not log


@given(grids, grids, st.integers(0, 2**32), st.floats(0, 1), st.floats(0, 1))
def test_conservative(rows, cols, seed, sp, ep):
    m = random_valid(rows, cols, seed, sp, ep)
    out, log = align(parse(serialize(m)), rows, cols)
    assert out == m and not log


@given(st.text(alphabet="FELUXN", max_size=60), grids, grids)
def test_empty_log_iff_valid_input(text, rows, cols):
    _, log = align(parse(text), rows, cols)
    assert (not log) == validate_sequence(parse(text), rows, cols).valid
