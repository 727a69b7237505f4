from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cqopt import ratlp
from cqopt.errors import SizeError
from cqopt.hypergraph import Hypergraph, gyo_acyclic
from cqopt.infobound import (Monotonicity, Submodularity, ddr_bound, elemental_cone, fhtw, polymatroid_bound,
                             polymatroid_constraints, render_width_report, stat_constraints, subw)
from cqopt.qmodel import Atom, ConjunctiveQuery, parse_query, parse_stats

from conftest import CARD4, DATA, FULL4, QUERIES, card_stats
from oracles import fractional_edge_cover, shannon_bound_float

F = frozenset


def counts(ineqs):
    mono = sum(isinstance(i, Monotonicity) for i in ineqs)
    return mono, len(ineqs) - mono


def test_elemental_counts():
    assert counts(polymatroid_constraints(1)) == (1, 0)
    assert counts(polymatroid_constraints(2)) == (2, 2)
    assert counts(polymatroid_constraints(4)) == (4, 48)
    for n in range(2, 7):
        assert counts(polymatroid_constraints(n))[1] == n * (n - 1) * 2 ** (n - 2)
    with pytest.raises(SizeError):
        polymatroid_constraints(13)


def test_stat_rows(q4):
    rows = stat_constraints(parse_stats(CARD4, q4))
    assert [(dict(r.coeffs), r.rhs) for r in rows] == [({F(p): 1}, 1) for p in ("XY", "YZ", "ZW", "WX")]
    full = parse_stats(FULL4, q4)
    fd = [r for r in stat_constraints(full) if r.constraint.xs == F("W")][0]
    assert dict(fd.coeffs) == {F("WX"): 1, F("W"): -1} and fd.rhs == 0
    norm = parse_stats("mode numeric N=16\nnorm(R; 2; Y | X)^2 <= 256\n", q4)
    (r,) = stat_constraints(norm)
    # (1/2)h(X) + h(Y|X) <= (1/2) log_16 256
    assert dict(r.coeffs) == {F("XY"): 1, F("X"): Fraction(-1, 2)} and r.rhs == 1


def test_four_cycle_full_bound(q4full):
    s = parse_stats(FULL4, q4full)
    res = polymatroid_bound("XYZW", s)
    assert res.value == Fraction(7, 4)
    assert res.flow.check_identity() and res.flow.value(s) == res.value
    assert res.witness.is_polymatroid() and res.witness["XYZW"] == Fraction(7, 4)
    numeric = parse_stats((DATA / "stats" / "four_cycle_full_numeric.stats").read_text(), q4full)
    assert abs(float(polymatroid_bound("XYZW", numeric).value) - 1.75) < 2 ** -40


def test_full_bound_against_full_cone_oracle(q4full):
    s = parse_stats(FULL4, q4full)
    rows = [(dict(r.coeffs), float(r.rhs)) for r in stat_constraints(s)]
    assert abs(shannon_bound_float("XYZW", F("XYZW"), rows) - 1.75) < 1e-7


def test_single_guard_and_triangle():
    q = parse_query("Q(X,Y) :- R(X,Y).")
    assert polymatroid_bound("XY", card_stats(q)).value == 1
    tri = parse_query(QUERIES["triangle"])
    assert polymatroid_bound("ABC", card_stats(tri)).value == Fraction(3, 2)


def test_ddr_four_cycle(s4):
    res = ddr_bound([F("XYZ"), F("YZW")], s4)
    assert res.value == Fraction(3, 2)
    flow = res.flow
    assert flow.check_identity()
    assert dict(flow.targets) == {F("XYZ"): Fraction(1, 2), F("YZW"): Fraction(1, 2)}
    w = {c.guard: v for c, v in flow.sources.items()}
    assert sum(w.values()) == Fraction(3, 2)
    assert ddr_bound([F("XYZ")], s4).value == polymatroid_bound("XYZ", s4).value
    assert ddr_bound([F("XYZ"), F("XYZ")], s4).value == ddr_bound([F("XYZ")], s4).value


def test_widths_four_cycle(q4, s4):
    f = fhtw(q4, s4)
    assert f.value == 2 and not f.best_td.is_trivial
    w = subw(q4, s4)
    assert w.value == Fraction(3, 2)
    assert [p.value for p in w.per_selector] == [Fraction(3, 2)] * 4
    assert all(p.flow.check_identity() for p in w.per_selector)
    text = render_width_report(q4, s4, w)
    assert "3/2" in text


def test_widths_small():
    path = parse_query("Q(X,Y,Z) :- R(X,Y), S(Y,Z).")
    assert fhtw(path, card_stats(path)).value == 1
    one = parse_query("Q(X,Y) :- R(X,Y).")
    assert fhtw(one, card_stats(one)).value == 1
    c5 = parse_query(QUERIES["cycle5"])
    assert subw(c5, card_stats(c5)).value == Fraction(5, 3)


def test_unbounded_status():
    q = parse_query("Q(X,Y) :- R(X,Y), S(Y).")
    s = parse_stats("card(S) <= N\n", q)
    assert polymatroid_bound("XY", s).status == ratlp.UNBOUNDED
    assert fhtw(q, s).status == ratlp.UNBOUNDED
    assert subw(q, s).status == ratlp.UNBOUNDED


@pytest.mark.parametrize("name", sorted(QUERIES))
def test_subw_le_fhtw(name):
    q = parse_query(QUERIES[name])
    s = card_stats(q)
    w, f = subw(q, s), fhtw(q, s)
    assert w.value <= f.value
    if gyo_acyclic(Hypergraph.of([F(a.vars) for a in q.atoms]))[0]:
        assert w.value == f.value


def test_numeric_and_symbolic_agree(q4full):
    sym = subw(q4full, parse_stats(FULL4, q4full))
    num = subw(q4full, parse_stats((DATA / "stats" / "four_cycle_full_numeric.stats").read_text(), q4full))
    assert abs(sym.value - num.value) < Fraction(1, 1 << 40)


@st.composite
def hypergraphs(draw):
    vs = "ABCD"[:draw(st.integers(1, 4))]
    edges = draw(st.lists(st.frozensets(st.sampled_from(vs), min_size=1, max_size=3), min_size=1, max_size=4))
    missing = set(vs) - set().union(*edges)
    if missing:
        edges.append(F(missing))
    return vs, edges


def query_of(edges) -> ConjunctiveQuery:
    atoms = tuple(Atom(f"R{i}", tuple(sorted(e))) for i, e in enumerate(edges))
    head = tuple(dict.fromkeys(v for a in atoms for v in a.vars))
    return ConjunctiveQuery(head, atoms)


@settings(max_examples=40, deadline=None)
@given(hypergraphs())
def test_cardinality_bound_is_edge_cover(hg):
    vs, edges = hg
    q = query_of(edges)
    res = polymatroid_bound(vs, card_stats(q))
    assert res.value == fractional_edge_cover(list(vs), edges)
    assert res.flow.check_identity()


@settings(max_examples=30, deadline=None)
@given(hypergraphs(), st.data())
def test_adding_constraint_never_increases(hg, data):
    vs, edges = hg
    q = query_of(edges)
    base = card_stats(q)
    a = data.draw(st.sampled_from(q.atoms))
    xs = data.draw(st.frozensets(st.sampled_from(a.vars), max_size=len(a.vars) - 1))
    ys = F(a.vars) - xs
    e = data.draw(st.sampled_from(["0", "1/2", "1"]))
    extra = f"deg({a.symbol}; {','.join(sorted(ys))} | {','.join(sorted(xs))}) <= N^{{{e}}}\n"
    if not xs:
        extra = f"card({a.symbol}) <= N^{{{e}}}\n"
    more = parse_stats("mode symbolic\n" + "".join(
        f"card({b.symbol}) <= N\n" for b in q.atoms) + extra, q)
    bags = [F(vs)] + ([F(edges[0])] if len(edges) > 1 else [])
    before, after = ddr_bound(bags, base), ddr_bound(bags, more)
    assert after.value <= before.value
    assert after.flow.value(more) == after.value and after.flow.check_identity()
    assert after.witness.is_polymatroid()


def test_elemental_cone_has_no_duplicates():
    cone = elemental_cone("ABCD")
    assert len(cone) == len(set(cone)) == 4 + 24
    assert all(isinstance(c, (Monotonicity, Submodularity)) for c in cone)
