"""Polymatroid LPs, bounds, widths and Shannon-flow certificates.

Entropy vectors live in log_N units. Coordinates are the non-empty subsets of the
variable set; h(empty) is fixed at 0 and omitted everywhere.
"""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import CertificateError, ModeError, SizeError
from .hypergraph import (BagSelector, TreeDecomposition, bag_name, bag_selectors, enumerate_tds,
                         minimal_tds)
from .qmodel import ConjunctiveQuery, DegreeConstraint, StatisticsSet
from . import ratlp

MAX_VARS = 12
LOG_BITS = 64
REPORT_TOL = Fraction(1, 1 << 40)

VarSet = frozenset


def set_key(s: Iterable[str]) -> tuple:
    s = tuple(sorted(s))
    return (len(s), s)


# --------------------------------------------------------------------------- basic inequalities


@dataclass(frozen=True)
class Monotonicity:
    """h(big) >= h(small) with small a subset of big."""

    big: frozenset
    small: frozenset

    def __post_init__(self):
        if not self.small <= self.big or self.small == self.big:
            raise ValueError("monotonicity needs a strict subset")

    def form(self) -> dict[frozenset, int]:
        f = {self.big: 1}
        if self.small:
            f[self.small] = -1
        return f

    def sort_key(self) -> tuple:
        return (0, set_key(self.big), set_key(self.small))

    def render(self, order=None) -> str:
        return f"h({_fmt(self.big, order)}) >= h({_fmt(self.small, order)})"


@dataclass(frozen=True)
class Submodularity:
    """h(AB) + h(AC) >= h(A) + h(ABC), i.e. h(B|A) >= h(B|AC)."""

    a: frozenset
    b: frozenset
    c: frozenset

    def __post_init__(self):
        if not self.b or not self.c or self.a & self.b or self.a & self.c or self.b & self.c:
            raise ValueError("submodularity needs disjoint parts with B, C non-empty")

    def normalized(self) -> "Submodularity":
        if set_key(self.c) < set_key(self.b):
            return Submodularity(self.a, self.c, self.b)
        return self

    def form(self) -> dict[frozenset, int]:
        f: dict[frozenset, int] = defaultdict(int)
        f[self.a | self.b] += 1
        f[self.a | self.c] += 1
        if self.a:
            f[self.a] -= 1
        f[self.a | self.b | self.c] -= 1
        return {k: v for k, v in f.items() if v}

    def sort_key(self) -> tuple:
        return (1, set_key(self.a), set_key(self.b), set_key(self.c))

    def render(self, order=None) -> str:
        return (f"h({_fmt(self.b, order)}|{_fmt(self.a, order)}) >= "
                f"h({_fmt(self.b, order)}|{_fmt(self.a | self.c, order)})")


BasicInequality = Union[Monotonicity, Submodularity]


def polymatroid_constraints(variables: Union[int, Sequence[str]]) -> list[BasicInequality]:
    """Elemental inequalities; submodularities listed once per ordered pair (b, c)."""
    if isinstance(variables, int):
        variables = [f"X{i}" for i in range(1, variables + 1)]
    vs = tuple(variables)
    n = len(vs)
    if not 1 <= n <= MAX_VARS:
        raise SizeError(f"variable count {n} outside 1..{MAX_VARS}")
    full = frozenset(vs)
    out: list[BasicInequality] = [Monotonicity(full, full - {x}) for x in vs]
    for b in vs:
        for c in vs:
            if b == c:
                continue
            rest = [v for v in vs if v not in (b, c)]
            for r in range(len(rest) + 1):
                for a in combinations(rest, r):
                    out.append(Submodularity(frozenset(a), frozenset({b}), frozenset({c})))
    return out


def elemental_cone(variables: Sequence[str]) -> list[BasicInequality]:
    """Deduplicated elemental inequalities (the (b, c) symmetry removed)."""
    seen, out = set(), []
    for ineq in polymatroid_constraints(variables):
        if isinstance(ineq, Submodularity):
            ineq = ineq.normalized()
        if ineq not in seen:
            seen.add(ineq)
            out.append(ineq)
    return out


# --------------------------------------------------------------------------- entropy vectors


@dataclass(frozen=True)
class EntropyVector:
    variables: tuple[str, ...]
    coords: Mapping[frozenset, Fraction]

    def __getitem__(self, s: Iterable[str]) -> Fraction:
        s = frozenset(s)
        if not s:
            return Fraction(0)
        return self.coords[s]

    def h(self, ys: Iterable[str], xs: Iterable[str] = ()) -> Fraction:
        xs = frozenset(xs)
        return self[frozenset(ys) | xs] - self[xs]

    def is_polymatroid(self) -> bool:
        for ineq in elemental_cone(self.variables):
            if sum(c * self[s] for s, c in ineq.form().items()) < 0:
                return False
        return True


# --------------------------------------------------------------------------- statistic rows


def log_ratio(value: int, base: int) -> Fraction:
    """ln(value)/ln(base), rounded to LOG_BITS fractional bits."""
    if value <= 0 or base < 2:
        raise ModeError(f"cannot take log of {value} in base {base}")
    if value == 1:
        return Fraction(0)
    with localcontext() as ctx:
        ctx.prec = 60
        q = Decimal(value).ln() / Decimal(base).ln()
        scaled = (q * (1 << LOG_BITS)).to_integral_value()
    return Fraction(int(scaled), 1 << LOG_BITS)


@dataclass(frozen=True)
class StatRow:
    constraint: DegreeConstraint
    coeffs: Mapping[frozenset, Fraction]
    rhs: Fraction


def constraint_log_bound(c: DegreeConstraint, s: StatisticsSet) -> Fraction:
    """log_N of the constraint's bound (for norms: of the norm itself)."""
    if s.symbolic:
        e = Fraction(c.bound)
    else:
        if c.bound <= 0:
            raise ModeError(f"numeric bound must be positive: {c.describe()}")
        if s.base_N is None:
            raise ModeError("numeric statistics need a base N (mode numeric N=...)")
        e = log_ratio(int(c.bound), s.base_N)
    return e / c.k if c.is_norm else e


def constraint_terms(c: DegreeConstraint) -> dict[tuple[frozenset, frozenset], Fraction]:
    """The constraint's left-hand side as conditional terms {(ys, xs): coefficient}."""
    terms = {(c.ys, c.xs): Fraction(1)}
    if c.is_norm and c.xs:
        terms[(c.xs, frozenset())] = Fraction(1, c.k)
    return terms


def stat_constraints(s: StatisticsSet) -> list[StatRow]:
    rows = []
    for c in s.constraints:
        coeffs: dict[frozenset, Fraction] = defaultdict(Fraction)
        for (ys, xs), k in constraint_terms(c).items():
            coeffs[ys | xs] += k
            if xs:
                coeffs[xs] -= k
        rows.append(StatRow(c, {k: v for k, v in coeffs.items() if v}, constraint_log_bound(c, s)))
    return rows


# --------------------------------------------------------------------------- flows


@dataclass(frozen=True)
class ShannonFlowInequality:
    """sum_B lam_B h(B) <= sum_c w_c (constraint terms), certified by `witness`."""

    variables: tuple[str, ...]
    targets: Mapping[frozenset, Fraction]
    sources: Mapping[DegreeConstraint, Fraction]
    witness: Mapping[BasicInequality, Fraction]

    def source_terms(self) -> dict[tuple[frozenset, frozenset], Fraction]:
        out: dict[tuple[frozenset, frozenset], Fraction] = defaultdict(Fraction)
        for c, w in self.sources.items():
            for t, k in constraint_terms(c).items():
                out[t] += w * k
        return {t: v for t, v in out.items() if v}

    def residual(self) -> dict[frozenset, Fraction]:
        """LHS + witness forms - RHS, coordinatewise; empty iff the identity holds."""
        acc: dict[frozenset, Fraction] = defaultdict(Fraction)
        for b, lam in self.targets.items():
            acc[b] += lam
        for ineq, mu in self.witness.items():
            for s, k in ineq.form().items():
                acc[s] += mu * k
        for (ys, xs), w in self.source_terms().items():
            acc[ys | xs] -= w
            if xs:
                acc[xs] += w
        return {k: v for k, v in acc.items() if v}

    def check_identity(self) -> bool:
        return not self.residual() and all(v >= 0 for v in self.witness.values()) \
            and all(v >= 0 for v in self.sources.values()) and all(v >= 0 for v in self.targets.values())

    def value(self, s: StatisticsSet) -> Fraction:
        return sum((w * constraint_log_bound(c, s) for c, w in self.sources.items()), Fraction(0))

    def render(self, order=None) -> str:
        lhs = " + ".join(f"{_coef(v)}h({_fmt(b, order)})" for b, v in
                         sorted(self.targets.items(), key=lambda kv: _order_key(kv[0], order)))
        terms = self.source_terms()
        rhs = " + ".join(f"{_coef(v)}h({_term(ys, xs, order)})" for (ys, xs), v in
                         sorted(terms.items(), key=lambda kv: (_order_key(kv[0][0] | kv[0][1], order),
                                                               _order_key(kv[0][1], order))))
        return f"{lhs or '0'} <= {rhs or '0'}"


def _order_key(s: frozenset, order) -> tuple:
    if order is None:
        return set_key(s)
    idx = {v: i for i, v in enumerate(order)}
    return (len(s), tuple(sorted(idx.get(v, len(idx)) for v in s)))


def _fmt(s: Iterable[str], order=None) -> str:
    return bag_name(s, order) if s else ""


def _term(ys, xs, order=None) -> str:
    return _fmt(ys, order) + (f"|{_fmt(xs, order)}" if xs else "")


_VULGAR = {Fraction(1, 2): "½", Fraction(1, 3): "⅓", Fraction(2, 3): "⅔", Fraction(1, 4): "¼",
           Fraction(3, 4): "¾"}


def _coef(v: Fraction) -> str:
    if v == 1:
        return ""
    if v in _VULGAR:
        return _VULGAR[v] + "·"
    return f"{v}·"


def fmt_exponent(v: Optional[Fraction], symbolic: bool = True) -> str:
    if v is None:
        return "unbounded"
    if symbolic:
        return str(v)
    return f"{float(v):.12g}"


# --------------------------------------------------------------------------- LP core


@dataclass(frozen=True)
class BoundResult:
    status: str
    value: Optional[Fraction]
    witness: Optional[EntropyVector] = None
    flow: Optional[ShannonFlowInequality] = None

    @property
    def bounded(self) -> bool:
        return self.status == ratlp.OPTIMAL


def _variables(bags: Iterable[frozenset], s: StatisticsSet,
               variables: Optional[Sequence[str]]) -> tuple[str, ...]:
    if variables is not None:
        return tuple(variables)
    vs = set().union(*bags)
    for c in s.constraints:
        vs |= c.xs | c.ys
    return tuple(sorted(vs))


@lru_cache(maxsize=4096)
def _solve_cached(bags: tuple[frozenset, ...], s: StatisticsSet, variables: tuple[str, ...]) -> BoundResult:
    n = len(variables)
    if n > MAX_VARS:
        raise SizeError(f"{n} variables exceed the cap of {MAX_VARS}")
    idx = {v: i for i, v in enumerate(variables)}
    for b in bags:
        if not b <= set(idx):
            raise ValueError(f"bag {sorted(b)} uses unknown variables")

    def col(sub: Iterable[str]) -> int:
        m = 0
        for v in sub:
            m |= 1 << idx[v]
        return m - 1

    t = (1 << n) - 1
    lp = ratlp.LinearProgram(t + 1, {t: Fraction(1)}, [], frozenset({t}))
    stat_rows = [r for r in stat_constraints(s) if (r.constraint.xs | r.constraint.ys) <= set(idx)]
    for r in stat_rows:
        lp.add({col(k): v for k, v in r.coeffs.items()}, "<=", r.rhs)
    for b in bags:
        lp.add({t: 1, col(b): -1}, "<=", 0)
    cone = elemental_cone(variables)
    for ineq in cone:
        lp.add({col(k): -v for k, v in ineq.form().items()}, "<=", 0)
    sol = ratlp.solve(lp)
    if sol.status != ratlp.OPTIMAL:
        return BoundResult(sol.status, None)

    coords = {}
    for m in range(1, 1 << n):
        coords[frozenset(v for v in variables if m >> idx[v] & 1)] = sol.primal[m - 1]
    h = EntropyVector(variables, coords)

    y = sol.dual
    ns = len(stat_rows)
    nb = len(bags)
    sources: dict[DegreeConstraint, Fraction] = {}
    for r, w in zip(stat_rows, y[:ns]):
        if w:
            sources[r.constraint] = sources.get(r.constraint, Fraction(0)) + w
    targets: dict[frozenset, Fraction] = {}
    for b, lam in zip(bags, y[ns:ns + nb]):
        if lam:
            targets[b] = targets.get(b, Fraction(0)) + lam
    witness: dict[BasicInequality, Fraction] = {}
    for ineq, mu in zip(cone, y[ns + nb:]):
        if mu:
            witness[ineq] = witness.get(ineq, Fraction(0)) + mu
    # reduced costs of h columns are slack on h(S) >= 0, i.e. monotonicity down to the empty set
    reduced = [Fraction(0)] * t
    for con, yi in zip(lp.constraints, y):
        if yi:
            for j, a in con.coeffs.items():
                if j < t:
                    reduced[j] += a * yi
    for m in range(1, 1 << n):
        if reduced[m - 1]:
            big = frozenset(v for v in variables if m >> idx[v] & 1)
            witness[Monotonicity(big, frozenset())] = reduced[m - 1]
    flow = ShannonFlowInequality(variables, targets, sources, witness)
    if not flow.check_identity():
        raise CertificateError(f"extracted flow fails the identity check: {flow.residual()}")
    if flow.value(s) != sol.value:
        raise CertificateError("flow value differs from the LP optimum")
    return BoundResult(ratlp.OPTIMAL, sol.value, h, flow)


def ddr_bound(bags: Sequence[Iterable[str]], s: StatisticsSet,
              variables: Optional[Sequence[str]] = None) -> BoundResult:
    """max over polymatroids satisfying s of min_B h(B), with its dual certificate."""
    distinct = tuple(dict.fromkeys(frozenset(b) for b in bags))
    if not distinct:
        raise ValueError("need at least one bag")
    vs = _variables(distinct, s, variables)
    return _solve_cached(distinct, s, vs)


def polymatroid_bound(target: Iterable[str], s: StatisticsSet,
                      variables: Optional[Sequence[str]] = None) -> BoundResult:
    return ddr_bound([frozenset(target)], s, variables)


# --------------------------------------------------------------------------- widths


@dataclass
class TdCost:
    td: TreeDecomposition
    per_bag: list[tuple[frozenset, BoundResult]]

    @property
    def value(self) -> Optional[Fraction]:
        vals = [r.value for _, r in self.per_bag]
        if any(v is None for v in vals):
            return None
        return max(vals)


@dataclass
class FhtwResult:
    status: str
    value: Optional[Fraction]
    best_td: Optional[TreeDecomposition]
    per_td: list[TdCost]
    best_index: Optional[int] = None


def fhtw(q: ConjunctiveQuery, s: StatisticsSet, tds: Optional[Sequence[TreeDecomposition]] = None) -> FhtwResult:
    tds = list(tds) if tds is not None else enumerate_tds(q)
    per_td = []
    for td in tds:
        per_td.append(TdCost(td, [(b, polymatroid_bound(b, s, q.all_vars)) for b in td.bags]))
    finite = [(c.value, i) for i, c in enumerate(per_td) if c.value is not None]
    if not finite:
        return FhtwResult(ratlp.UNBOUNDED, None, None, per_td)
    value, i = min(finite)
    return FhtwResult(ratlp.OPTIMAL, value, tds[i], per_td, i)


@dataclass
class SelectorBound:
    selector: BagSelector
    result: BoundResult

    @property
    def value(self) -> Optional[Fraction]:
        return self.result.value

    @property
    def flow(self) -> Optional[ShannonFlowInequality]:
        return self.result.flow


@dataclass
class SubwResult:
    status: str
    value: Optional[Fraction]
    tds: list[TreeDecomposition]
    per_selector: list[SelectorBound]


def width_tds(q: ConjunctiveQuery) -> list[TreeDecomposition]:
    """Decompositions entering the submodular width: free-connex and not refined by another."""
    return minimal_tds(enumerate_tds(q))


def subw(q: ConjunctiveQuery, s: StatisticsSet, tds: Optional[Sequence[TreeDecomposition]] = None,
         prune: bool = False, threads: int = 1) -> SubwResult:
    tds = list(tds) if tds is not None else width_tds(q)
    sels = bag_selectors(tds, prune=prune)

    def one(sel: BagSelector) -> SelectorBound:
        # bags strictly containing another selected bag never change min_B h(B)
        return SelectorBound(sel, ddr_bound(sel.minimal_bags(), s, q.all_vars))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per = list(pool.map(one, sels))
    else:
        per = [one(sel) for sel in sels]
    if any(p.value is None for p in per):
        return SubwResult(ratlp.UNBOUNDED, None, tds, per)
    return SubwResult(ratlp.OPTIMAL, max(p.value for p in per), tds, per)


# --------------------------------------------------------------------------- reports


def render_width_report(q: ConjunctiveQuery, s: StatisticsSet, res: Union[FhtwResult, SubwResult]) -> str:
    order = q.all_vars
    lines = []
    if isinstance(res, FhtwResult):
        lines.append(f"fhtw = {fmt_exponent(res.value, s.symbolic)}")
        for i, c in enumerate(res.per_td):
            bags = ", ".join(f"{bag_name(b, order)}:{fmt_exponent(r.value, s.symbolic)}" for b, r in c.per_bag)
            mark = " *" if i == res.best_index else ""
            lines.append(f"  TD {i}: {{{bags}}} -> {fmt_exponent(c.value, s.symbolic)}{mark}")
    else:
        lines.append(f"subw = {fmt_exponent(res.value, s.symbolic)}")
        for i, td in enumerate(res.tds):
            lines.append(f"  TD {i}: {{{', '.join(bag_name(b, order) for b in td.bags)}}}")
        for i, p in enumerate(res.per_selector):
            sel = ", ".join(bag_name(b, order) for b in p.selector.choice)
            lines.append(f"  selector {i} ({sel}): {fmt_exponent(p.value, s.symbolic)}")
            if p.flow is not None:
                lines.append(f"    {p.flow.render(order)}")
    return "\n".join(lines)
