from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cqopt.errors import ArgumentError, CertificateError
from cqopt.infobound import Monotonicity, ShannonFlowInequality, Submodularity, ddr_bound, polymatroid_bound
from cqopt.proofmachine import (COMPOSITION, SUBMODULARITY, Identity, IntegralFlow, ProofSequence, ProofStep, Term,
                                coarsen_witnesses, construct_proof_sequence, identity_form, reset, reset_index, to_integral,
                                verify_proof_sequence)
from cqopt.qmodel import Atom, ConjunctiveQuery, parse_query, parse_stats

from conftest import QUERIES, card_stats

F = frozenset
T = Term.of
ORDER = ("X", "Y", "Z", "W")


def reference_identity() -> Identity:
    return Identity([F("XYZ"), F("YZW")], [T("XY"), T("YZ"), T("ZW")],
                    [Submodularity(F("Y"), F("Z"), F("X")), Submodularity(F(), F("Y"), F("ZW"))])


def test_hand_identity_is_valid():
    assert reference_identity().is_valid()
    broken = reference_identity()
    broken.witnesses.pop()
    assert not broken.is_valid()


def test_reference_sequence():
    ident = reference_identity()
    seq = construct_proof_sequence(ident)
    assert seq.render(ORDER).splitlines() == [
        "1. h(YZ) -> h(Y) + h(Z|Y)",
        "2. h(Z|Y) -> h(Z|XY)",
        "3. h(XY) + h(Z|XY) -> h(XYZ)",
        "4. h(Y) -> h(Y|ZW)",
        "5. h(ZW) + h(Y|ZW) -> h(YZW)",
    ]
    assert verify_proof_sequence(ident, seq) == (True, "ok")
    assert not seq.slack


def test_verifier_rejects_broken_sequences():
    ident = reference_identity()
    seq = construct_proof_sequence(ident)
    for i in range(len(seq.steps)):
        cut = ProofSequence(seq.steps[:i] + seq.steps[i + 1:], seq.initial, seq.final)
        ok, msg = verify_proof_sequence(ident, cut)
        assert not ok and msg
    bad = ProofStep(COMPOSITION, (T("X"), T("Z", "Y")), (T("XZ"),))
    assert bad.well_formed()
    noop = ProofStep(SUBMODULARITY, (T("Z", "Y"),), (T("Z", "Y"),))
    assert noop.well_formed() is None
    padded = ProofSequence(seq.steps[:2] + [ProofStep(SUBMODULARITY, (T("Z", "XY"),), (T("Z", "XY"),))]
                           + seq.steps[2:], seq.initial, seq.final)
    assert verify_proof_sequence(ident, padded)[0]


def test_trivial_identity():
    ident = Identity([F("X")], [T("X")], [])
    seq = construct_proof_sequence(ident)
    assert seq.steps == [] and verify_proof_sequence(ident, seq)[0]
    ineq, rest, lost = reset(ident, T("X"))
    assert lost == T("X") and rest.targets == [] and rest.sources == []


def test_to_integral_from_lp(s4):
    res = ddr_bound([F("XYZ"), F("YZW")], s4)
    flow, L = to_integral(res.flow)
    assert L == 2 and flow.scale == 2
    assert set(flow.targets.values()) == {1}
    ident = identity_form(flow)
    assert set(ident.targets) == {F("XYZ"), F("YZW")}
    assert ident.is_valid()
    seq = construct_proof_sequence(ident)
    assert verify_proof_sequence(flow, seq)[0]


def test_to_integral_scaling(q4):
    s = parse_stats("card(R) <= N\ncard(S) <= N\n", q4)
    r, sc = s.constraints
    flow = ShannonFlowInequality(("X", "Y", "Z"), {F("XY"): Fraction(1, 3), F("YZ"): Fraction(2, 3)},
                                 {r: Fraction(1, 3), sc: Fraction(1)}, {Monotonicity(F("YZ"), F()): Fraction(1, 3)})
    integral, L = to_integral(flow)
    assert integral.scale == 3 and L == 3
    same, L2 = to_integral(ShannonFlowInequality(("X", "Y"), {F("XY"): Fraction(1)}, {r: Fraction(1)}, {}))
    assert same.scale == 1 and L2 == 1


def test_identity_form_rejects_bad_witness(q4):
    s = parse_stats("card(R) <= N\n", q4)
    (r,) = s.constraints
    bad = IntegralFlow(("X", "Y"), {F("XY"): 1}, {r: 1}, {Monotonicity(F("XY"), F("X")): 1}, 1)
    with pytest.raises(CertificateError):
        identity_form(bad)
    neg = IntegralFlow(("X", "Y"), {F("XY"): 1}, {r: 1}, {Monotonicity(F("XY"), F("X")): -1}, 1)
    with pytest.raises(CertificateError):
        identity_form(neg)


def test_reset_drop_xy():
    ineq, rest, lost = reset(reference_identity(), T("XY"))
    assert ineq.render(ORDER) == "h(YZW) <= h(YZ) + h(ZW)"
    assert lost == T("XYZ")
    assert rest.is_valid()


def test_reset_drop_yz_and_errors():
    ineq, rest, lost = reset(reference_identity(), T("YZ"))
    assert rest.is_valid() and len(rest.targets) >= 1
    assert T("YZ") not in rest.sources
    with pytest.raises(ArgumentError):
        reset(reference_identity(), T("XW"))


def test_coarsen_merges_chains():
    chain = [Submodularity(F(), F("Y"), F("Z")), Submodularity(F("Z"), F("W"), F("Y"))]
    assert coarsen_witnesses(chain) == [Submodularity(F(), F("Y"), F("ZW"))]
    apart = [Submodularity(F(), F("Y"), F("Z")), Submodularity(F("X"), F("Y"), F("W"))]
    assert len(coarsen_witnesses(apart)) == 2


def test_triangle_certificate():
    q = parse_query(QUERIES["triangle"])
    res = polymatroid_bound("ABC", card_stats(q))
    flow, L = to_integral(res.flow)
    assert L == 2
    ident = identity_form(flow)
    seq = construct_proof_sequence(ident)
    assert seq.final == Counter({T("ABC"): 2})
    assert verify_proof_sequence(ident, seq)[0]


# --------------------------------------------------------------------------- random corpus


def check_round_trip(flow):
    integral, L = to_integral(flow)
    fine = identity_form(integral, coarsen=False)
    assert verify_proof_sequence(fine, construct_proof_sequence(fine))[0]
    ident = identity_form(integral)
    assert len(ident.witnesses) <= len(fine.witnesses)
    assert ident.is_valid() and len(ident.targets) == L
    seq = construct_proof_sequence(ident)
    ok, msg = verify_proof_sequence(integral, seq)
    assert ok, msg
    assert len(seq.steps) <= 4 * (len(ident.sources) + len(ident.targets) + len(ident.witnesses))
    for i, src in enumerate(ident.sources):
        if not src.unconditional:
            continue
        r = reset_index(ident, i)
        assert r.identity.is_valid()
        assert len(ident.targets) - len(r.identity.targets) <= 1
        assert r.lost_target is None or r.lost_target.ys in ident.targets
        assert Counter(r.identity.sources)[src] < Counter(ident.sources)[src]


@pytest.mark.parametrize("name", sorted(QUERIES))
def test_corpus_selectors_round_trip(name):
    from cqopt.infobound import subw
    q = parse_query(QUERIES[name])
    for p in subw(q, card_stats(q)).per_selector:
        check_round_trip(p.flow)


@st.composite
def query_and_stats(draw):
    vs = "ABCD"[:draw(st.integers(2, 4))]
    edges = draw(st.lists(st.frozensets(st.sampled_from(vs), min_size=1, max_size=3), min_size=1, max_size=4))
    missing = set(vs) - set().union(*edges)
    if missing:
        edges.append(F(missing))
    atoms = tuple(Atom(f"R{i}", tuple(sorted(e))) for i, e in enumerate(edges))
    q = ConjunctiveQuery(tuple(vs), atoms)
    lines = ["mode symbolic"] + [f"card({a.symbol}) <= N" for a in atoms]
    for a in atoms:
        if len(a.vars) < 2 or not draw(st.booleans()):
            continue
        x = draw(st.sampled_from(a.vars))
        rest = ",".join(v for v in a.vars if v != x)
        e = draw(st.sampled_from(["0", "1/2", "1/3"]))
        if draw(st.booleans()):
            lines.append(f"deg({a.symbol}; {rest} | {x}) <= N^{{{e}}}")
        else:
            lines.append(f"norm({a.symbol}; 2; {rest} | {x})^2 <= N^{{{e}}}")
    bags = draw(st.lists(st.frozensets(st.sampled_from(vs), min_size=1), min_size=1, max_size=3))
    return q, parse_stats("\n".join(lines) + "\n", q), bags


@settings(max_examples=60, deadline=None)
@given(query_and_stats())
def test_random_certificates_round_trip(case):
    q, s, bags = case
    res = ddr_bound(bags, s, q.all_vars)
    assert res.bounded
    check_round_trip(res.flow)
