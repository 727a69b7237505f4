"""Proof-driven evaluation of disjunctive rules and conjunctive queries."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from math import lcm
from typing import Iterable, Optional, Sequence

from .errors import ArgumentError, DataError, InvariantError, UnboundedError
from .hypergraph import TreeDecomposition, atom_assignment, bag_selectors, build_ddr
from .infobound import ShannonFlowInequality, ddr_bound, fhtw, width_tds
from .proofmachine import (Identity, Move, SourceOrigin, Term, apply_move, choose_move, identity_form, reset_index,
                           to_integral)
from .qmodel import ConjunctiveQuery, DegreeConstraint, DisjunctiveRule, StatisticsSet, atom_relation, guard_relation
from .relcore import (Database, JoinTree, Relation, degree_map, join_all, lknorm_pow, project, semijoin, union,
                      yannakakis)

EXACT_ROOT_LIMIT = 64


# --------------------------------------------------------------------------- exact bounds


def iroot_ceil(x: int, n: int) -> int:
    """Smallest integer m >= 0 with m**n >= x."""
    if x <= 0:
        return 0
    if n == 1:
        return x
    lo, hi = 0, 1
    while hi ** n < x:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if mid ** n >= x:
            hi = mid
        else:
            lo = mid + 1
    return lo


@dataclass(frozen=True)
class PowerBound:
    """B = prod base**exp with rational exponents."""

    factors: tuple[tuple[int, Fraction], ...]

    @staticmethod
    def of(pairs: Iterable[tuple[int, Fraction]]) -> "PowerBound":
        acc: dict[int, Fraction] = defaultdict(Fraction)
        for b, e in pairs:
            if b < 1:
                raise ArgumentError(f"base must be positive, got {b}")
            if b > 1 and e:
                acc[b] += Fraction(e)
        return PowerBound(tuple(sorted((b, e) for b, e in acc.items() if e)))

    def log(self, base: int) -> Fraction:
        """Exact when every base is a power of `base`; otherwise a 64-bit rational approximation."""
        from .infobound import log_ratio
        return sum((e * log_ratio(b, base) for b, e in self.factors), Fraction(0))

    def __float__(self) -> float:
        out = 1.0
        for b, e in self.factors:
            out *= float(b) ** float(e)
        return out

    def _denominator(self, power: int) -> int:
        return lcm(*(Fraction(e * power).denominator for _, e in self.factors)) if self.factors else 1

    def ge_inv(self, p: Fraction, power: int = 1) -> bool:
        """p >= B**(-power)."""
        if p <= 0:
            return False
        q = self._denominator(power)
        if q <= EXACT_ROOT_LIMIT:
            num, den = p.numerator ** q, p.denominator ** q
            for b, e in self.factors:
                k = int(e * power * q)
                if k >= 0:
                    num *= b ** k
                else:
                    den *= b ** (-k)
            return num >= den
        with localcontext() as ctx:
            ctx.prec = 80
            s = Decimal(p.numerator).ln() - Decimal(p.denominator).ln()
            for b, e in self.factors:
                s += Decimal(e.numerator * power) / Decimal(e.denominator) * Decimal(b).ln()
            return s >= Decimal("-1e-60")

    def ceil(self) -> int:
        q = self._denominator(1)
        if q <= EXACT_ROOT_LIMIT:
            num, den = 1, 1
            for b, e in self.factors:
                k = int(e * q)
                if k >= 0:
                    num *= b ** k
                else:
                    den *= b ** (-k)
            m = iroot_ceil(-(-num // den), q)
            while m > 0 and (m - 1) ** q * den >= num:
                m -= 1
            while m ** q * den < num:
                m += 1
            return m
        with localcontext() as ctx:
            ctx.prec = 80
            s = sum((Decimal(e.numerator) / Decimal(e.denominator) * Decimal(b).ln() for b, e in self.factors),
                    Decimal(0))
            return int(s.exp().to_integral_value(rounding="ROUND_CEILING"))

    def render(self) -> str:
        if not self.factors:
            return "1"
        return " * ".join(f"{b}^{e}" if e != 1 else str(b) for b, e in self.factors)


def bound_from_flow(flow: ShannonFlowInequality, s: StatisticsSet, base_n: Optional[int] = None) -> PowerBound:
    if s.symbolic:
        if base_n is None:
            raise ArgumentError("symbolic statistics need a base N")
        return PowerBound.of([(base_n, flow.value(s))])
    pairs = []
    for c, w in flow.sources.items():
        pairs.append((int(c.bound), w / c.k if c.is_norm else w))
    return PowerBound.of(pairs)


def _actual(db: Database, c: DegreeConstraint) -> int:
    r = guard_relation(db, c)
    if c.is_norm:
        return lknorm_pow(r, c.ys, c.xs, c.k)
    return max(degree_map(r, c.ys, c.xs).values(), default=0)


def resolve_base(s: StatisticsSet, db: Database) -> int:
    """Smallest integer N such that the data satisfies every symbolic constraint."""
    if not s.symbolic:
        raise ArgumentError("base resolution applies to symbolic statistics")
    n = 1
    for c in s.constraints:
        if c.guard not in db.relations:
            raise DataError(f"no data for guard {c.guard}")
        a = _actual(db, c)
        if a <= 1:
            continue
        e = Fraction(c.bound)
        if e <= 0:
            raise DataError(f"{c.describe()} <= N^{e} cannot hold for actual value {a}")
        n = max(n, iroot_ceil(a ** e.denominator, e.numerator))
    return n


def symbolic_violations(db: Database, s: StatisticsSet, base_n: int) -> list[str]:
    out = []
    for c in s.constraints:
        a = _actual(db, c)
        e = Fraction(c.bound)
        if not PowerBound.of([(base_n, e)]).ge_inv(Fraction(1, a) if a else Fraction(1)):
            out.append(f"{c.describe()} <= N^{e} violated at N={base_n}: actual {a}")
    return out


# --------------------------------------------------------------------------- weighted relations


@dataclass
class WeightedRelation:
    """Rows of `schema` with rational weights; `keys` are the conditioning columns."""

    schema: tuple[str, ...]
    rows: dict
    keys: tuple[str, ...] = ()

    def value(self, binding: dict) -> Fraction:
        return self.rows.get(tuple(binding[v] for v in self.schema), Fraction(0))

    def support(self) -> Relation:
        return Relation(self.schema, frozenset(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def restrict(self, rel: Relation) -> "WeightedRelation":
        shared = [v for v in self.schema if v in rel.vars]
        if not shared:
            return self if len(rel) else WeightedRelation(self.schema, {}, self.keys)
        mine = [self.schema.index(v) for v in shared]
        allowed = {tuple(t[i] for i in rel.positions(shared)) for t in rel.tuples}
        rows = {t: p for t, p in self.rows.items() if tuple(t[i] for i in mine) in allowed}
        return WeightedRelation(self.schema, rows, self.keys)

    def mass_ok(self) -> bool:
        kp = [self.schema.index(v) for v in self.keys]
        mass: dict = defaultdict(Fraction)
        for t, p in self.rows.items():
            if p <= 0:
                return False
            mass[tuple(t[i] for i in kp)] += p
        return all(m <= 1 for m in mass.values())


def _conditional(r: Relation, ys: frozenset, xs: frozenset) -> WeightedRelation:
    keys = tuple(v for v in r.schema if v in xs)
    sch = keys + tuple(v for v in r.schema if v in ys)
    proj = project(r, sch)
    degs = degree_map(proj, ys, xs)
    kp = proj.positions(keys)
    rows = {t: Fraction(1, degs[tuple(t[i] for i in kp)]) for t in proj.tuples}
    return WeightedRelation(sch, rows, keys)


def _norm_marginal(r: Relation, c: DegreeConstraint) -> WeightedRelation:
    degs = degree_map(r, c.ys, c.xs)
    total = sum(d ** c.k for d in degs.values())
    sch = tuple(v for v in r.schema if v in c.xs)
    return WeightedRelation(sch, {x: Fraction(d ** c.k, total) for x, d in degs.items()}, ())


def init_measures(ident: Identity, db: Database) -> list[WeightedRelation]:
    """One payload per source copy, built from the data of the copy's guard."""
    cache: dict = {}
    out = []
    for term, origin in zip(ident.sources, ident.origins):
        if not isinstance(origin, SourceOrigin):
            raise ArgumentError(f"source {term.render()} has no statistic to initialize from")
        c = origin.constraint
        key = (c, origin.role)
        if key not in cache:
            r = guard_relation(db, c)
            cache[key] = _norm_marginal(r, c) if origin.role == "norm" else _conditional(r, c.ys, c.xs)
        out.append(cache[key])
    return out


def _marginal(p: WeightedRelation, onto: frozenset) -> WeightedRelation:
    sch = tuple(v for v in p.schema if v in onto)
    pos = [p.schema.index(v) for v in sch]
    acc: dict = defaultdict(Fraction)
    for t, w in p.rows.items():
        acc[tuple(t[i] for i in pos)] += w
    return WeightedRelation(sch, {t: min(Fraction(1), w) for t, w in acc.items()}, ())


def _decompose(p: WeightedRelation, a: frozenset) -> tuple[WeightedRelation, WeightedRelation]:
    m = _marginal(p, a)
    pos = [p.schema.index(v) for v in m.schema]
    raw: dict = defaultdict(Fraction)
    for t, w in p.rows.items():
        raw[tuple(t[i] for i in pos)] += w
    if any(v > 1 for v in raw.values()):
        raise InvariantError("unconditional payload has mass above one")
    cond = {t: w / raw[tuple(t[i] for i in pos)] for t, w in p.rows.items()}
    return m, WeightedRelation(p.schema, cond, m.schema)


def _compose(p: WeightedRelation, cond: WeightedRelation) -> WeightedRelation:
    kpos_c = [cond.schema.index(v) for v in cond.keys]
    extra = [v for v in cond.schema if v not in p.schema]
    epos = [cond.schema.index(v) for v in extra]
    index: dict = defaultdict(list)
    for t, w in cond.rows.items():
        index[tuple(t[i] for i in kpos_c)].append((tuple(t[i] for i in epos), w))
    kpos_p = [p.schema.index(v) for v in cond.keys]
    rows = {}
    for t, w in p.rows.items():
        for e, w2 in index.get(tuple(t[i] for i in kpos_p), ()):
            rows[t + e] = w * w2
    return WeightedRelation(p.schema + tuple(extra), rows, ())


def _split(p: WeightedRelation, b: PowerBound) -> tuple[WeightedRelation, WeightedRelation]:
    keep, over = {}, {}
    for t, w in p.rows.items():
        (keep if b.ge_inv(w) else over)[t] = w
    return WeightedRelation(p.schema, keep, p.keys), WeightedRelation(p.schema, over, p.keys)


# --------------------------------------------------------------------------- execution


@dataclass(frozen=True)
class TermState:
    term: Term
    payload: WeightedRelation


@dataclass
class Branch:
    """Identity plus one payload per source (aligned); restrictions are the overflow/keep filters."""

    ident: Identity
    payloads: list
    restrictions: list = field(default_factory=list)
    finished: list = field(default_factory=list)
    lost: int = 0
    depth: int = 0

    @property
    def states(self) -> list[TermState]:
        return [TermState(t, p) for t, p in zip(self.ident.sources, self.payloads)]


@dataclass
class ExecutionReport:
    bound: PowerBound
    log_bound: Optional[Fraction]
    L: int
    branches: int = 0
    steps: int = 0
    max_intermediate: int = 0
    output_sizes: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    @property
    def ceil_bound(self) -> int:
        return self.bound.ceil()

    def to_dict(self, order: Optional[Sequence[str]] = None) -> dict:
        from .hypergraph import bag_name
        return {
            "B": self.bound.render(),
            "ceil_B": self.ceil_bound,
            "log_N_B": str(self.log_bound) if self.log_bound is not None else None,
            "L": self.L,
            "branches": self.branches,
            "steps": self.steps,
            "max_intermediate": self.max_intermediate,
            "outputs": {bag_name(b, order): n for b, n in self.output_sizes.items()},
            "branch_log": list(self.log),
        }


class _Executor:
    def __init__(self, rule: DisjunctiveRule, db: Database, bound: PowerBound, order: Sequence[str],
                 check_invariants: bool = False):
        self.rule = rule
        self.db = db
        self.B = bound
        self.order = tuple(order)
        self.outputs: dict[frozenset, set] = {b: set() for b in rule.bags}
        self.check = check_invariants
        self.body = join_all([atom_relation(db, a) for a in rule.body]) if check_invariants else None

    def emit(self, bag: frozenset, rel: WeightedRelation) -> None:
        sch = tuple(v for v in self.order if v in bag)
        pos = [rel.schema.index(v) for v in sch]
        self.outputs[bag].update(tuple(t[i] for i in pos) for t in rel.rows)

    def spawn(self, br: Branch, ident: Identity, payloads: list, index: int, over: WeightedRelation,
              report: ExecutionReport, max_depth: int) -> Branch:
        rr = reset_index(ident, index)
        if br.depth + 1 > max_depth:
            raise InvariantError("branch depth exceeds the number of sources and witnesses")
        if not rr.identity.targets and not br.finished:
            raise InvariantError("overflow with no target left: data violates the statistics")
        gone = set(rr.removed)
        sup = over.support()
        kept = [p.restrict(sup) for j, p in enumerate(payloads) if j not in gone]
        report.branches += 1
        report.log.append(f"depth {br.depth + 1}: dropped {ident.sources[index].render(self.order)} "
                          f"({len(over)} tuples), lost {rr.lost_target.render(self.order) if rr.lost_target else '-'}")
        return Branch(rr.identity, kept, br.restrictions + [sup],
                      [(t, p.restrict(sup)) for t, p in br.finished], br.lost + 1, br.depth + 1)

    def step(self, br: Branch, move: Move, report: ExecutionReport, max_depth: int) -> Optional[Branch]:
        """Apply one move to `br` in place; return an overflow branch if one was spawned."""
        pl = br.payloads
        child = None
        if move.case == "a":
            (i,) = move.consumed
            keep, over = _split(pl[i], self.B)
            if len(over):
                child = self.spawn(br, br.ident, pl, i, over, report, max_depth)
            self.emit(move.target, keep)
            sup = keep.support()
            new = [p.restrict(sup) for j, p in enumerate(pl) if j != i]
            br.finished = [(t, p.restrict(sup)) for t, p in br.finished] + [(move.target, keep)]
            br.restrictions.append(sup)
        elif move.case == "c":
            i, j = move.consumed
            full = _compose(pl[i], pl[j])
            keep, over = _split(full, self.B)
            rest = [p for k, p in enumerate(pl) if k not in (i, j)]
            if len(over):
                after = apply_move(br.ident, move)
                child = self.spawn(br, after, rest + [over], len(rest), over, report, max_depth)
                sup = keep.support()
                rest = [p.restrict(sup) for p in rest]
                br.finished = [(t, p.restrict(sup)) for t, p in br.finished]
                br.restrictions.append(sup)
            new = rest + [keep]
        elif move.case == "b":
            (i,) = move.consumed
            p = pl[i]
            if len(move.produced) == 2:
                m, cond = _decompose(p, move.produced[0].ys)
                new_terms = [m, cond]
            else:
                new_terms = [WeightedRelation(p.schema, p.rows, p.keys)]
            new = [q for k, q in enumerate(pl) if k != i] + new_terms
        else:
            (i,) = move.consumed
            rest = [q for k, q in enumerate(pl) if k != i]
            new = rest + ([_marginal(pl[i], move.produced[0].ys)] if move.produced else [])
        br.ident = apply_move(br.ident, move)
        br.payloads = new
        report.steps += len(move.steps) or 1
        report.max_intermediate = max([report.max_intermediate] + [len(p) for p in new])
        if self.check:
            self.check_branch(br)
            if child is not None:
                self.check_branch(child)
        return child

    def check_branch(self, br: Branch) -> None:
        for p in br.payloads:
            if not p.mass_ok():
                raise InvariantError("payload breaks the mass law")
        dom = self.body
        for r in br.restrictions:
            dom = semijoin(dom, r)
        power = len(br.ident.targets) + len(br.finished)
        for t in dom.tuples:
            binding = dict(zip(dom.schema, t))
            prod = Fraction(1)
            for p in br.payloads:
                prod *= p.value(binding)
            for _, p in br.finished:
                prod *= p.value(binding)
            if not self.B.ge_inv(prod, power):
                raise InvariantError(f"measure invariant fails at {binding}")

    def run(self, ident: Identity, payloads: list, report: ExecutionReport) -> None:
        max_depth = len(ident.sources) + len(ident.witnesses) + len(ident.targets)
        work = [Branch(ident, payloads)]
        if self.check:
            self.check_branch(work[0])
        while work:
            br = work.pop()
            while br.ident.targets:
                move = choose_move(br.ident)
                child = self.step(br, move, report, max_depth)
                if child is not None:
                    work.append(child)


def _rule_order(rule: DisjunctiveRule, order: Optional[Sequence[str]]) -> tuple[str, ...]:
    if order is not None:
        return tuple(order)
    out: list[str] = []
    for a in rule.body:
        out += [v for v in a.vars if v not in out]
    return tuple(out)


def evaluate_ddr(rule: DisjunctiveRule, s: StatisticsSet, db: Database, base_n: Optional[int] = None,
                 order: Optional[Sequence[str]] = None, check_invariants: bool = False,
                 flow: Optional[ShannonFlowInequality] = None
                 ) -> tuple[dict[frozenset, Relation], ExecutionReport]:
    """Evaluate a disjunctive rule; returns one relation per head bag (a model of the rule).

    `flow` defaults to the optimal certificate of the rule's bound.
    """
    order = _rule_order(rule, order)
    if flow is None:
        res = ddr_bound(rule.bags, s, order)
        if not res.bounded:
            raise UnboundedError("the statistics do not bound this rule")
        flow, value = res.flow, res.value
    else:
        if not flow.check_identity() or set(flow.targets) - set(rule.bags):
            raise ArgumentError("flow does not certify this rule")
        value = flow.value(s)
    if s.symbolic:
        n = base_n if base_n is not None else (s.base_N or resolve_base(s, db))
    else:
        n = s.base_N
    bound = bound_from_flow(flow, s, n)
    integral, L = to_integral(flow)
    ident = identity_form(integral)
    payloads = init_measures(ident, db)
    report = ExecutionReport(bound, value, L)
    ex = _Executor(rule, db, bound, order, check_invariants)
    ex.run(ident, payloads, report)
    out = {}
    for b in rule.bags:
        sch = tuple(v for v in order if v in b)
        out[b] = Relation(sch, frozenset(ex.outputs[b]))
        report.output_sizes[b] = len(out[b])
    return out, report


# --------------------------------------------------------------------------- query plans


@dataclass
class CqResult:
    output: Relation
    plan: str
    reports: list
    bag_sizes: dict
    yannakakis_produced: int = 0

    @property
    def branches(self) -> int:
        return sum(r.branches for r in self.reports)


def _bag_relations(q: ConjunctiveQuery, db: Database, td: TreeDecomposition, qb: dict) -> list[Relation]:
    assign = atom_assignment(q, td)
    rels = []
    for i, bag in enumerate(td.bags):
        r = qb[bag]
        for k in assign[i]:
            r = semijoin(r, atom_relation(db, q.atoms[k]))
        rels.append(r)
    return rels


def _filter_by_atoms(q: ConjunctiveQuery, db: Database, bag: frozenset, r: Relation) -> Relation:
    for a in q.atoms:
        if a.varset <= bag:
            r = semijoin(r, atom_relation(db, a))
    return r


def _run_td(q: ConjunctiveQuery, td: TreeDecomposition, rels: list[Relation]) -> tuple[Relation, int]:
    stats: dict = {}
    out = yannakakis(JoinTree(tuple(rels), td.edges), q.head_vars, stats)
    return out, stats.get("produced", 0)


def evaluate_cq_static(q: ConjunctiveQuery, s: StatisticsSet, db: Database,
                       td: Optional[TreeDecomposition] = None, base_n: Optional[int] = None,
                       check_invariants: bool = False) -> CqResult:
    if td is None:
        res = fhtw(q, s)
        if res.best_td is None:
            raise UnboundedError("no decomposition has bounded bags under these statistics")
        td = res.best_td
    order = q.all_vars
    qb, reports = {}, []
    for bag in td.bags:
        rule = DisjunctiveRule(((bag, "Q_bag"),), q.atoms)
        out, rep = evaluate_ddr(rule, s, db, base_n, order, check_invariants)
        qb[bag] = _filter_by_atoms(q, db, bag, out[bag])
        reports.append(rep)
    rels = _bag_relations(q, db, td, qb)
    out, produced = _run_td(q, td, rels)
    return CqResult(out, "static", reports, {b: len(r) for b, r in qb.items()}, produced)


def evaluate_cq_adaptive(q: ConjunctiveQuery, s: StatisticsSet, db: Database, base_n: Optional[int] = None,
                         tds: Optional[Sequence[TreeDecomposition]] = None,
                         check_invariants: bool = False) -> CqResult:
    tds = list(tds) if tds is not None else [t for t in width_tds(q) if not t.is_trivial]
    if len(tds) < 2:
        res = evaluate_cq_static(q, s, db, tds[0] if tds else None, base_n, check_invariants)
        res.plan = "static"
        return res
    order = q.all_vars
    qb: dict[frozenset, set] = {b: set() for td in tds for b in td.bags}
    reports, done = [], set()
    for sel in bag_selectors(tds):
        bags = sel.minimal_bags()
        key = frozenset(bags)
        if key in done:
            continue
        done.add(key)
        rule = build_ddr(q, type(sel)(bags))
        out, rep = evaluate_ddr(rule, s, db, base_n, order, check_invariants)
        reports.append(rep)
        for b, r in out.items():
            qb[b].update(r.tuples)
    rels_by_bag = {b: _filter_by_atoms(q, db, b, Relation(tuple(v for v in order if v in b), frozenset(ts)))
                   for b, ts in qb.items()}
    result = None
    produced = 0
    for td in tds:
        out, p = _run_td(q, td, _bag_relations(q, db, td, rels_by_bag))
        produced += p
        result = out if result is None else union(result, out)
    return CqResult(result, "adaptive", reports, {b: len(r) for b, r in rels_by_bag.items()}, produced)


def evaluate_cq(q: ConjunctiveQuery, s: StatisticsSet, db: Database, plan: str = "adaptive",
                td: Optional[TreeDecomposition] = None, base_n: Optional[int] = None,
                check_invariants: bool = False) -> CqResult:
    if plan == "static":
        return evaluate_cq_static(q, s, db, td, base_n, check_invariants)
    if plan == "adaptive":
        return evaluate_cq_adaptive(q, s, db, base_n, None, check_invariants)
    raise ArgumentError(f"unknown plan {plan!r}")
