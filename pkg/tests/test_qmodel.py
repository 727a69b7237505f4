import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cqopt.errors import DataError, ModeError, QuerySyntaxError, SemanticError
from cqopt.qmodel import (Atom, ConjunctiveQuery, check_stats, infer_stats, load_database, parse_query,
                          parse_stats, relation_csv, render_query, render_stats)
from cqopt.relcore import Database, Relation

from conftest import CARD4, FOUR_CYCLE, FULL4, random_db


def test_parse_four_cycle(q4):
    assert q4.head_vars == ("X", "Y")
    assert [a.symbol for a in q4.atoms] == ["R", "S", "T", "U"]
    assert q4.atoms[3].vars == ("W", "X")
    assert q4.all_vars == ("X", "Y", "Z", "W")


def test_parse_boolean_query():
    q = parse_query("Q() :- R(X,Y).")
    assert q.free == frozenset() and q.head_vars == ()


def test_parse_errors():
    with pytest.raises(QuerySyntaxError) as e:
        parse_query("Q(X) :- R(X,Y")
    assert e.value.line == 1
    with pytest.raises(SemanticError):
        parse_query("Q(X,Z) :- R(X,Y).")
    with pytest.raises(SemanticError):
        parse_query("Q(X) :- R(X,X).")
    with pytest.raises(QuerySyntaxError):
        parse_query("Q(X) :- R(X,Y)")


def test_parse_is_whitespace_and_comment_insensitive():
    a = parse_query("Q( X ,Y ) :-\n  R(X, Y), # first\n  S(Y,Z) .")
    assert a == parse_query("Q(X,Y) :- R(X,Y), S(Y,Z).")


def test_parse_stats_symbolic(q4):
    s = parse_stats(CARD4, q4)
    assert s.symbolic and len(s.constraints) == 4
    assert all(c.bound == 1 and not c.xs for c in s.constraints)
    full = parse_stats(FULL4, q4)
    fd = [c for c in full.constraints if c.xs == frozenset("W")][0]
    assert fd.ys == frozenset("X") and fd.bound == 0
    c = [c for c in full.constraints if c.xs == frozenset("X")][0]
    assert c.bound == Fraction(1, 2)


def test_parse_stats_numeric_and_norm(q4):
    s = parse_stats("mode numeric N=1000\ncard(R) <= 100\ndeg(S; Z | Y) <= 5\nnorm(S; 2; Z | Y)^2 <= 25\n", q4)
    assert not s.symbolic and s.base_N == 1000
    norm = [c for c in s.constraints if c.is_norm][0]
    assert norm.k == 2 and norm.bound == 25


@pytest.mark.parametrize("text", [
    "deg(U; X | X) <= 2",
    "mode numeric N=100\ncard(R) <= N",
    "card(R) <= 0",
    "deg(R; Q | X) <= 2",
    "card(Nope) <= 3",
    "mode symbolic\ncard(R) <= 5",
    "norm(R; 2; Y | X)^3 <= 4",
])
def test_parse_stats_errors(q4, text):
    with pytest.raises(SemanticError):
        parse_stats(text, q4)


def test_load_sample4(sample4):
    assert sample4.size == 12
    assert sample4["U"].tuples == {("i", 1), ("j", 1), ("k", 2)}


def test_load_errors(tmp_path, q4):
    with pytest.raises(DataError):
        load_database(tmp_path, q4)
    for s in "RSTU":
        (tmp_path / f"{s}.csv").write_text({"R": "X,Y\n", "S": "Y,Z\n", "T": "Z,W\n", "U": "W,X\n"}[s])
    db = load_database(tmp_path, q4)
    assert db.size == 0
    (tmp_path / "R.csv").write_text("X,Y\n1,p,3\n")
    with pytest.raises(DataError):
        load_database(tmp_path, q4)
    (tmp_path / "R.csv").write_text("Y,X\n1,p\n")
    with pytest.raises(DataError):
        load_database(tmp_path, q4)


def test_load_is_order_insensitive(tmp_path, q4, sample4):
    for s in "RSTU":
        rows = relation_csv(sample4[s]).splitlines()
        (tmp_path / f"{s}.csv").write_text("\n".join([rows[0]] + rows[:0:-1] + rows[1:2]) + "\n")
    assert load_database(tmp_path, q4) == sample4


def test_infer_stats_sample4(sample4, q4):
    s = infer_stats(sample4, q4, 1)
    fd = [c for c in s.constraints if c.guard == "U" and c.xs == frozenset("W")][0]
    assert fd.bound == 1
    assert check_stats(sample4, s) == []
    s0 = infer_stats(sample4, q4, 0)
    assert all(not c.xs for c in s0.constraints) and len(s0.constraints) == 4
    empty = Database({k: Relation.empty(("a", "b")) for k in "RSTU"})
    assert all(c.bound == 1 for c in infer_stats(empty, q4, 1).constraints)


def test_check_stats(sample4, q4):
    assert check_stats(sample4, parse_stats("deg(U; X | W) <= 1", q4)) == []
    v = check_stats(sample4, parse_stats("card(R) <= 2", q4))
    assert len(v) == 1 and v[0].actual == 3
    v = check_stats(sample4, parse_stats("deg(S; Z | Y) <= 1", q4))
    assert v[0].witness == {"Y": "q"}
    empty = Database({k: Relation.empty(("a", "b")) for k in "RSTU"})
    assert check_stats(empty, parse_stats("card(R) <= 1", q4)) == []
    with pytest.raises(ModeError):
        check_stats(sample4, parse_stats(CARD4, q4))


def test_render_stats_round_trip(sample4, q4):
    s = infer_stats(sample4, q4, 1)
    again = parse_stats(render_stats(s), q4)
    assert {(c.guard, c.xs, c.ys, c.bound) for c in again.constraints} == \
        {(c.guard, c.xs, c.ys, c.bound) for c in s.constraints}


names = st.sampled_from(["A", "B", "C", "D", "E", "x1", "y_2"])


@st.composite
def queries(draw):
    atoms = []
    for i in range(draw(st.integers(1, 4))):
        vs = draw(st.lists(names, min_size=1, max_size=3, unique=True))
        atoms.append(Atom(f"R{i}", tuple(vs)))
    all_vars = list(dict.fromkeys(v for a in atoms for v in a.vars))
    head = draw(st.lists(st.sampled_from(all_vars), unique=True, max_size=len(all_vars)))
    return ConjunctiveQuery(tuple(head), tuple(atoms))


@given(queries())
def test_query_render_round_trip(q):
    assert parse_query(render_query(q)) == q


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 1))
def test_inferred_stats_always_hold(seed, k):
    q = parse_query(FOUR_CYCLE)
    db = random_db(q, random.Random(seed), max_tuples=15, max_dom=4)
    assert check_stats(db, infer_stats(db, q, k)) == []
