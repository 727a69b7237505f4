"""Integral Shannon-flow inequalities, identity form, proof sequences and Reset."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Iterable, Optional, Sequence, Union

from .errors import ArgumentError, CertificateError, InvariantError
from .infobound import (BasicInequality, Monotonicity, ShannonFlowInequality, Submodularity, _fmt,
                        constraint_terms)
from .qmodel import DegreeConstraint


@dataclass(frozen=True)
class Term:
    """h(ys | xs)."""

    ys: frozenset
    xs: frozenset = frozenset()

    def __post_init__(self):
        if self.ys & self.xs:
            raise ArgumentError("term parts overlap")

    @staticmethod
    def of(ys: Iterable[str], xs: Iterable[str] = ()) -> "Term":
        return Term(frozenset(ys), frozenset(xs))

    @property
    def unconditional(self) -> bool:
        return not self.xs

    @property
    def vars(self) -> frozenset:
        return self.ys | self.xs

    def render(self, order=None) -> str:
        return f"h({_fmt(self.ys, order)}{'|' + _fmt(self.xs, order) if self.xs else ''})"


def term_order(t: Term) -> tuple:
    """Tie-break order among candidate terms: smaller first, then reverse name order."""
    names = tuple(sorted(t.vars))
    return (len(names), tuple(_Rev(n) for n in names), tuple(_Rev(n) for n in sorted(t.xs)))


class _Rev(str):
    def __lt__(self, other):
        return str.__gt__(self, other)

    def __gt__(self, other):
        return str.__lt__(self, other)


# --------------------------------------------------------------------------- integral flows


@dataclass(frozen=True)
class IntegralFlow:
    variables: tuple[str, ...]
    targets: dict
    sources: dict
    witness: dict
    scale: int

    @property
    def L(self) -> int:
        return sum(self.targets.values())

    def render(self, order=None) -> str:
        frac = ShannonFlowInequality(self.variables, {k: Fraction(v) for k, v in self.targets.items()},
                                     {k: Fraction(v) for k, v in self.sources.items()},
                                     {k: Fraction(v) for k, v in self.witness.items()})
        return frac.render(order)


def to_integral(flow: ShannonFlowInequality) -> tuple[IntegralFlow, int]:
    dens = [v.denominator for v in flow.targets.values()]
    dens += [v.denominator for v in flow.witness.values()]
    for c, w in flow.sources.items():
        dens.append(w.denominator)
        for _, k in constraint_terms(c).items():
            dens.append((w * k).denominator)
    d = lcm(*dens) if dens else 1
    out = IntegralFlow(flow.variables,
                       {b: int(v * d) for b, v in flow.targets.items() if v},
                       {c: int(w * d) for c, w in flow.sources.items() if w},
                       {i: int(m * d) for i, m in flow.witness.items() if m},
                       d)
    return out, out.L


# --------------------------------------------------------------------------- identities


@dataclass(frozen=True)
class SourceOrigin:
    constraint: DegreeConstraint
    role: str  # "main": the h(Y|X) part; "norm": the h(X) part of an lk-norm constraint


@dataclass
class Identity:
    """targets = sources + witness expansions, as unit multisets."""

    targets: list
    sources: list
    witnesses: list
    origins: list = field(default_factory=list)

    def __post_init__(self):
        self.targets = [frozenset(t) for t in self.targets]
        self.sources = [s if isinstance(s, Term) else Term.of(s) for s in self.sources]
        if not self.origins:
            self.origins = [None] * len(self.sources)

    def copy(self) -> "Identity":
        return Identity(list(self.targets), list(self.sources), list(self.witnesses), list(self.origins))

    def residual(self) -> dict:
        acc: dict[frozenset, int] = defaultdict(int)
        for t in self.targets:
            acc[t] += 1
        for s in self.sources:
            acc[s.vars] -= 1
            if s.xs:
                acc[s.xs] += 1
        for w in self.witnesses:
            for k, v in w.form().items():
                acc[k] += v
        return {k: v for k, v in acc.items() if v and k}

    def is_valid(self) -> bool:
        return not self.residual()

    def inequality(self) -> "TermInequality":
        return TermInequality(Counter(self.targets), Counter(self.sources))


@dataclass(frozen=True)
class TermInequality:
    targets: Counter
    sources: Counter

    def render(self, order=None) -> str:
        def side(items):
            parts = []
            for t, k in items:
                parts.append(("" if k == 1 else f"{k}·") + t.render(order))
            return " + ".join(parts) or "0"
        tg = sorted(((Term(b), k) for b, k in self.targets.items()), key=lambda x: _sort_key(x[0], order))
        sr = sorted(self.sources.items(), key=lambda x: _sort_key(x[0], order))
        return f"{side(tg)} <= {side(sr)}"


def _sort_key(t: Term, order) -> tuple:
    idx = {v: i for i, v in enumerate(order or sorted(t.vars))}
    return (len(t.vars), tuple(sorted(idx.get(v, 99) for v in t.vars)), tuple(sorted(idx.get(v, 99) for v in t.xs)))


def _chain(first: Submodularity, second: Submodularity) -> Optional[Submodularity]:
    """h(B|A) >= h(B|AC1) and h(B|AC1) >= h(B|AC1C2) combine into h(B|A) >= h(B|AC1C2)."""
    for b1, c1 in ((first.b, first.c), (first.c, first.b)):
        for b2, c2 in ((second.b, second.c), (second.c, second.b)):
            if b1 == b2 and second.a == first.a | c1:
                return Submodularity(first.a, b1, c1 | c2).normalized()
    return None


def coarsen_witnesses(witnesses: Sequence[BasicInequality]) -> list:
    """Merge chained unit submodularities; the formal sum is unchanged."""
    out = sorted(witnesses, key=lambda w: w.sort_key())
    merged = True
    while merged:
        merged = False
        for i, w1 in enumerate(out):
            if not isinstance(w1, Submodularity):
                continue
            for j, w2 in enumerate(out):
                if j == i or not isinstance(w2, Submodularity):
                    continue
                m = _chain(w1, w2)
                if m is not None:
                    rest = [w for k, w in enumerate(out) if k not in (i, j)]
                    out = sorted(rest + [m], key=lambda w: w.sort_key())
                    merged = True
                    break
            if merged:
                break
    return out


def identity_form(flow: IntegralFlow, coarsen: bool = True) -> Identity:
    targets, sources, origins, witnesses = [], [], [], []
    for b, k in flow.targets.items():
        targets += [b] * k
    for c, w in flow.sources.items():
        for (ys, xs), coef in constraint_terms(c).items():
            copies = w * coef
            if copies.denominator != 1:
                raise CertificateError(f"non-integral copies for {c.describe()}")
            role = "norm" if (c.is_norm and xs == frozenset() and ys == c.xs and c.xs) else "main"
            sources += [Term(ys, xs)] * int(copies)
            origins += [SourceOrigin(c, role)] * int(copies)
    for ineq, m in flow.witness.items():
        if m < 0:
            raise CertificateError("negative witness multiplier")
        witnesses += [ineq] * m
    if coarsen:
        witnesses = coarsen_witnesses(witnesses)
    ident = Identity(targets, sources, witnesses, origins)
    if not ident.is_valid():
        raise CertificateError(f"identity check failed: {ident.residual()}")
    return ident


# --------------------------------------------------------------------------- proof steps

DECOMPOSITION = "decomposition"
COMPOSITION = "composition"
MONOTONICITY = "monotonicity"
SUBMODULARITY = "submodularity"


@dataclass(frozen=True)
class ProofStep:
    kind: str
    inputs: tuple
    outputs: tuple

    def render(self, order=None) -> str:
        rhs = " + ".join(t.render(order) for t in self.outputs) or "0"
        return f"{' + '.join(t.render(order) for t in self.inputs)} -> {rhs}"

    def well_formed(self) -> Optional[str]:
        ins, outs = self.inputs, self.outputs
        if self.kind == DECOMPOSITION:
            if len(ins) != 1 or len(outs) != 2 or not ins[0].unconditional:
                return "decomposition takes one unconditional term to two terms"
            a, b = outs
            if not a.unconditional or b.xs != a.ys or a.ys | b.ys != ins[0].ys:
                return "decomposition must be h(XY) -> h(X) + h(Y|X)"
        elif self.kind == COMPOSITION:
            if len(ins) != 2 or len(outs) != 1:
                return "composition takes two terms to one"
            a, b = ins
            if not a.unconditional or b.xs != a.ys or outs[0] != Term(a.ys | b.ys):
                return "composition must be h(X) + h(Y|X) -> h(XY)"
        elif self.kind == MONOTONICITY:
            if len(ins) != 1 or not ins[0].unconditional or len(outs) > 1:
                return "monotonicity takes one unconditional term"
            if outs and (not outs[0].unconditional or not outs[0].ys <= ins[0].ys):
                return "monotonicity must be h(XY) -> h(X)"
        elif self.kind == SUBMODULARITY:
            if len(ins) != 1 or len(outs) != 1:
                return "submodularity rewrites one term"
            a, b = ins[0], outs[0]
            if a.ys != b.ys or not a.xs <= b.xs:
                return "submodularity must be h(Y|X) -> h(Y|XZ)"
        else:
            return f"unknown step kind {self.kind!r}"
        return None


@dataclass
class ProofSequence:
    steps: list
    initial: Counter
    final: Counter
    slack: Counter = field(default_factory=Counter)

    def render(self, order=None) -> str:
        return "\n".join(f"{i + 1}. {s.render(order)}" for i, s in enumerate(self.steps))


# --------------------------------------------------------------------------- construction


@dataclass(frozen=True)
class Move:
    """One cancellation: which sources are consumed and what replaces them.

    Applying a move removes `consumed` (source indices) and appends `produced`
    in order; `target` is removed from the targets for a cancel move.
    """

    case: str  # "a", "b", "c", "d"
    consumed: tuple
    produced: tuple
    steps: tuple
    witness: Optional[BasicInequality] = None
    target: Optional[frozenset] = None


def choose_move(ident: Identity) -> Move:
    uncond = [i for i, s in enumerate(ident.sources) if s.unconditional]
    if not uncond:
        raise InvariantError("targets remain but no unconditional source exists")
    uncond.sort(key=lambda i: (term_order(ident.sources[i]), i))
    targets = set(ident.targets)
    for i in uncond:  # (a)
        w = ident.sources[i].ys
        if w in targets:
            return Move("a", (i,), (), (), target=w)
    for i in uncond:  # (c)
        w = ident.sources[i].ys
        conds = [j for j, s in enumerate(ident.sources) if s.xs and s.xs == w]
        if conds:
            j = min(conds, key=lambda j: (term_order(ident.sources[j]), j))
            out = Term(w | ident.sources[j].ys)
            step = ProofStep(COMPOSITION, (ident.sources[i], ident.sources[j]), (out,))
            return Move("c", (i, j), (out,), (step,))
    order = sorted(range(len(ident.witnesses)), key=lambda k: (ident.witnesses[k].sort_key(), k))
    for i in uncond:  # (b)
        w = ident.sources[i].ys
        for k in order:
            ineq = ident.witnesses[k]
            if not isinstance(ineq, Submodularity):
                continue
            for b, c in ((ineq.b, ineq.c), (ineq.c, ineq.b)):
                if ineq.a | b != w:
                    continue
                a = ineq.a
                steps = []
                produced = []
                if a:
                    steps.append(ProofStep(DECOMPOSITION, (Term(w),), (Term(a), Term(b, a))))
                    produced.append(Term(a))
                new = Term(b, a | c)
                steps.append(ProofStep(SUBMODULARITY, (Term(b, a),), (new,)))
                produced.append(new)
                return Move("b", (i,), tuple(produced), tuple(steps), witness=ineq)
    for i in uncond:  # (d)
        w = ident.sources[i].ys
        for k in order:
            ineq = ident.witnesses[k]
            if isinstance(ineq, Monotonicity) and ineq.big == w:
                out = (Term(ineq.small),) if ineq.small else ()
                step = ProofStep(MONOTONICITY, (Term(w),), out)
                return Move("d", (i,), out, (step,), witness=ineq)
    raise InvariantError("no cancellation found for any unconditional source")


def apply_move(ident: Identity, move: Move) -> Identity:
    out = ident.copy()
    for i in sorted(move.consumed, reverse=True):
        del out.sources[i]
        del out.origins[i]
    out.sources += list(move.produced)
    out.origins += [None] * len(move.produced)
    if move.witness is not None:
        out.witnesses.remove(move.witness)
    if move.target is not None:
        out.targets.remove(move.target)
    return out


def construct_proof_sequence(ident: Identity, check: bool = True) -> ProofSequence:
    if check and not ident.is_valid():
        raise CertificateError("identity does not hold")
    initial = Counter(ident.sources)
    final = Counter(Term(t) for t in ident.targets)
    steps = []
    cur = ident
    budget = 4 * (len(ident.targets) + len(ident.sources) + len(ident.witnesses)) + 4
    while cur.targets:
        move = choose_move(cur)
        steps += move.steps
        cur = apply_move(cur, move)
        budget -= 1
        if budget < 0:
            raise InvariantError("proof construction did not terminate")
    return ProofSequence(steps, initial, final, Counter(cur.sources))


def replay(initial: Counter, steps: Sequence[ProofStep]) -> tuple[Optional[Counter], str]:
    cur = Counter(initial)
    for n, step in enumerate(steps, 1):
        bad = step.well_formed()
        if bad:
            return None, f"step {n}: {bad}"
        need = Counter(step.inputs)
        for t, k in need.items():
            if cur[t] < k:
                return None, f"step {n}: operand {t.render()} not available"
        cur -= need
        cur += Counter(step.outputs)
    return +cur, "ok"


def verify_proof_sequence(flow: Union[IntegralFlow, Identity], seq: ProofSequence) -> tuple[bool, str]:
    """Replay check. Leftover terms beyond the targets must be declared as slack."""
    ident = flow if isinstance(flow, Identity) else identity_form(flow)
    if Counter(ident.sources) != seq.initial:
        return False, "initial multiset differs from the flow's sources"
    targets = Counter(Term(t) for t in ident.targets)
    if seq.final != targets:
        return False, "final multiset differs from the flow's targets"
    result, msg = replay(seq.initial, seq.steps)
    if result is None:
        return False, msg
    if result != seq.final + seq.slack:
        missing = targets - result
        return False, "replay does not reach the targets" + (
            f" (missing {', '.join(t.render() for t in missing)})" if missing else "")
    return True, "ok"


# --------------------------------------------------------------------------- reset


@dataclass
class ResetResult:
    inequality: TermInequality
    identity: Identity
    lost_target: Optional[Term]
    removed: list  # source indices removed from the input identity


def reset_index(ident: Identity, index: int) -> ResetResult:
    drop = ident.sources[index]
    if not drop.unconditional:
        raise ArgumentError("only unconditional sources can be dropped")
    cur = ident.copy()
    alive = list(range(len(ident.sources)))
    removed = [index]

    def remove_source(pos: int) -> None:
        del cur.sources[pos]
        del cur.origins[pos]
        del alive[pos]

    remove_source(alive.index(index))
    pending: Optional[frozenset] = drop.ys
    lost = None
    steps = 0
    limit = len(ident.targets) + len(ident.sources) + 2 * len(ident.witnesses) + 1
    while pending:
        steps += 1
        if steps > limit:
            raise InvariantError("reset chain did not terminate")
        if pending in cur.targets:  # (i)
            cur.targets.remove(pending)
            lost = Term(pending)
            break
        conds = [p for p, s in enumerate(cur.sources) if s.xs == pending]
        if conds:  # (iii)
            p = min(conds, key=lambda p: (term_order(cur.sources[p]), p))
            nxt = pending | cur.sources[p].ys
            removed.append(alive[p])
            remove_source(p)
            pending = nxt
            continue
        order = sorted(range(len(cur.witnesses)), key=lambda k: (cur.witnesses[k].sort_key(), k))
        hit = None
        for k in order:  # (ii)
            ineq = cur.witnesses[k]
            if isinstance(ineq, Submodularity):
                if ineq.a | ineq.b == pending:
                    hit = (k, Monotonicity(ineq.a | ineq.c, ineq.a), ineq.a | ineq.b | ineq.c)
                elif ineq.a | ineq.c == pending:
                    hit = (k, Monotonicity(ineq.a | ineq.b, ineq.a), ineq.a | ineq.b | ineq.c)
                if hit:
                    break
        if hit:
            k, mono, nxt = hit
            cur.witnesses[k] = mono
            pending = nxt
            continue
        for k in order:  # (iv)
            ineq = cur.witnesses[k]
            if isinstance(ineq, Monotonicity) and ineq.big == pending:
                hit = k
                break
        if hit is not None:
            pending = cur.witnesses.pop(hit).small
            continue
        raise InvariantError(f"reset: no cancellation for h({_fmt(pending)})")
    if not cur.is_valid():
        raise InvariantError("reset produced an invalid identity")
    return ResetResult(cur.inequality(), cur, lost, removed)


def reset(ident: Identity, drop: Term) -> tuple[TermInequality, Identity, Optional[Term]]:
    drop = drop if isinstance(drop, Term) else Term.of(drop)
    for i, s in enumerate(ident.sources):
        if s == drop:
            r = reset_index(ident, i)
            return r.inequality, r.identity, r.lost_target
    raise ArgumentError(f"{drop.render()} is not a source of the identity")
