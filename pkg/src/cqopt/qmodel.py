"""Query, statistics and data formats."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Optional, Union

from .errors import DataError, ModeError, QuerySyntaxError, SemanticError
from .relcore import Database, Relation, degree, degree_map, lknorm_pow, row_key

IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Atom:
    symbol: str
    vars: tuple[str, ...]

    @property
    def varset(self) -> frozenset:
        return frozenset(self.vars)

    def render(self) -> str:
        return f"{self.symbol}({','.join(self.vars)})"


@dataclass(frozen=True)
class ConjunctiveQuery:
    head_vars: tuple[str, ...]
    atoms: tuple[Atom, ...]
    name: str = "Q"

    @property
    def all_vars(self) -> tuple[str, ...]:
        seen: list[str] = []
        for a in self.atoms:
            for v in a.vars:
                if v not in seen:
                    seen.append(v)
        return tuple(seen)

    @property
    def free(self) -> frozenset:
        return frozenset(self.head_vars)

    @property
    def is_full(self) -> bool:
        return self.free == frozenset(self.all_vars)

    def render(self) -> str:
        body = ", ".join(a.render() for a in self.atoms)
        return f"{self.name}({','.join(self.head_vars)}) :- {body}."


@dataclass(frozen=True)
class DisjunctiveRule:
    head_bags: tuple[tuple[frozenset, str], ...]
    body: tuple[Atom, ...]

    @property
    def bags(self) -> tuple[frozenset, ...]:
        return tuple(b for b, _ in self.head_bags)


# --------------------------------------------------------------------------- query parsing

_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<implies>:-)|(?P<punct>[(),.])|(?P<bad>\S))")


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    out = []
    pos = 0
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def where(p: int) -> tuple[int, int]:
        ln = max(i for i, s in enumerate(line_starts) if s <= p)
        return ln + 1, p - line_starts[ln] + 1

    while pos < len(text):
        if text[pos:].strip() == "":
            break
        while text[pos].isspace():
            pos += 1
        if text[pos] == "#":
            nl = text.find("\n", pos)
            pos = len(text) if nl < 0 else nl + 1
            continue
        m = _TOKEN.match(text, pos)
        start = m.start(m.lastgroup)
        line, col = where(start)
        if m.lastgroup == "bad":
            raise QuerySyntaxError(f"unexpected character {m.group('bad')!r}", line, col)
        out.append((m.lastgroup, m.group(m.lastgroup), line, col))
        pos = m.end()
    line, col = where(len(text))
    out.append(("eof", "", line, col))
    return out


def parse_query(text: str) -> ConjunctiveQuery:
    toks = _tokenize(text)
    i = 0

    def expect(kind: str, value: Optional[str] = None) -> tuple:
        nonlocal i
        tok = toks[i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] if tok[0] != "eof" else "end of input"
            raise QuerySyntaxError(f"expected {want!r}, found {got!r}", tok[2], tok[3])
        i += 1
        return tok

    def atom(allow_empty: bool) -> tuple[str, list[str], tuple]:
        nonlocal i
        name_tok = expect("ident")
        expect("punct", "(")
        args: list[str] = []
        if toks[i][:2] == ("punct", ")"):
            if not allow_empty:
                raise QuerySyntaxError("atom needs at least one variable", toks[i][2], toks[i][3])
        else:
            args.append(expect("ident")[1])
            while toks[i][:2] == ("punct", ","):
                i += 1
                args.append(expect("ident")[1])
        expect("punct", ")")
        return name_tok[1], args, name_tok

    head_name, head_vars, _ = atom(allow_empty=True)
    expect("implies")
    atoms = []
    while True:
        sym, args, tok = atom(allow_empty=False)
        if len(set(args)) != len(args):
            raise SemanticError(f"repeated variable in atom {sym}({','.join(args)}) at line {tok[2]}")
        atoms.append(Atom(sym, tuple(args)))
        if toks[i][:2] == ("punct", ","):
            i += 1
            continue
        break
    expect("punct", ".")
    expect("eof")
    body_vars = {v for a in atoms for v in a.vars}
    for v in head_vars:
        if v not in body_vars:
            raise SemanticError(f"head variable {v!r} does not occur in the body")
    if len(set(head_vars)) != len(head_vars):
        raise SemanticError("repeated head variable")
    return ConjunctiveQuery(tuple(head_vars), tuple(atoms), head_name)


def render_query(q: ConjunctiveQuery) -> str:
    return q.render()


# --------------------------------------------------------------------------- statistics


@dataclass(frozen=True)
class DegreeConstraint:
    """deg_guard(ys | xs) <= bound, or the k-th power of an lk-norm when k is set.

    `bound` is an int in numeric mode and the exponent of N (a Fraction) in symbolic
    mode. `atom_vars` names the guard's columns when known.
    """

    guard: str
    xs: frozenset
    ys: frozenset
    bound: Union[int, Fraction]
    k: Optional[int] = None
    atom_vars: Optional[tuple[str, ...]] = None

    @property
    def is_norm(self) -> bool:
        return self.k is not None

    def key(self) -> tuple:
        return (self.guard, tuple(sorted(self.xs)), tuple(sorted(self.ys)), self.k or 0)

    def describe(self) -> str:
        ys = ",".join(self._order(self.ys))
        xs = ",".join(self._order(self.xs))
        if self.is_norm:
            return f"norm({self.guard}; {self.k}; {ys} | {xs})^{self.k}"
        if not self.xs and self.atom_vars and self.ys == frozenset(self.atom_vars):
            return f"card({self.guard})"
        return f"deg({self.guard}; {ys} | {xs})"

    def _order(self, vs: frozenset) -> list[str]:
        if self.atom_vars:
            return [v for v in self.atom_vars if v in vs]
        return sorted(vs)


@dataclass(frozen=True)
class StatisticsSet:
    constraints: tuple[DegreeConstraint, ...]
    mode: str = "symbolic"
    base_N: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("symbolic", "numeric"):
            raise ModeError(f"unknown mode {self.mode!r}")

    @property
    def symbolic(self) -> bool:
        return self.mode == "symbolic"

    def with_base(self, n: int) -> "StatisticsSet":
        return StatisticsSet(self.constraints, self.mode, n)

    def adding(self, c: DegreeConstraint) -> "StatisticsSet":
        return StatisticsSet(self.constraints + (c,), self.mode, self.base_N)


_BOUND_SYM = re.compile(r"^N(?:\^(?:\{\s*(?P<a>-?\d+)(?:\s*/\s*(?P<b>\d+))?\s*\}|\(\s*(?P<c>-?\d+)(?:\s*/\s*(?P<d>\d+))?\s*\)|(?P<e>-?\d+)))?$")
_LINE_MODE = re.compile(r"^mode\s+(symbolic|numeric)(?:\s+N\s*=\s*(\d+))?$")
_LINE_CARD = re.compile(r"^card\(\s*(\w+)\s*\)\s*<=\s*(.+)$")
_LINE_DEG = re.compile(r"^deg\(\s*(\w+)\s*;\s*([^|)]*?)\s*(?:\|\s*([^)]*?)\s*)?\)\s*<=\s*(.+)$")
_LINE_NORM = re.compile(r"^norm\(\s*(\w+)\s*;\s*(\d+)\s*;\s*([^|)]*?)\s*(?:\|\s*([^)]*?)\s*)?\)\s*\^\s*(\d+)\s*<=\s*(.+)$")


def _varlist(text: Optional[str], lineno: int) -> frozenset:
    if text is None or not text.strip():
        return frozenset()
    names = [t.strip() for t in text.split(",")]
    for n in names:
        if not IDENT.fullmatch(n):
            raise SemanticError(f"line {lineno}: bad variable name {n!r}")
    if len(set(names)) != len(names):
        raise SemanticError(f"line {lineno}: repeated variable")
    return frozenset(names)


def _parse_bound(text: str, lineno: int) -> tuple[str, Union[int, Fraction]]:
    text = text.strip()
    if re.fullmatch(r"-?\d+", text):
        v = int(text)
        if v <= 0:
            raise SemanticError(f"line {lineno}: bound must be positive, got {v}")
        return "int", v
    m = _BOUND_SYM.match(text.replace(" ", ""))
    if not m:
        raise SemanticError(f"line {lineno}: cannot parse bound {text!r}")
    num = m.group("a") or m.group("c") or m.group("e")
    den = m.group("b") or m.group("d")
    e = Fraction(1) if num is None else Fraction(int(num), int(den or 1))
    if e < 0:
        raise SemanticError(f"line {lineno}: bound N^{e} is below 1")
    return "sym", e


def parse_stats(text: str, query: Optional[ConjunctiveQuery] = None) -> StatisticsSet:
    header_mode = None
    base_n = None
    raw: list[tuple[int, str, frozenset, frozenset, Optional[int], str, Union[int, Fraction]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_MODE.match(line)
        if m:
            if header_mode is not None or raw:
                raise SemanticError(f"line {lineno}: mode line must come first and only once")
            header_mode = m.group(1)
            if m.group(2):
                if header_mode != "numeric":
                    raise SemanticError(f"line {lineno}: N= is only meaningful in numeric mode")
                base_n = int(m.group(2))
                if base_n < 2:
                    raise SemanticError(f"line {lineno}: base N must be at least 2")
            continue
        if (m := _LINE_CARD.match(line)):
            kind, val = _parse_bound(m.group(2), lineno)
            raw.append((lineno, m.group(1), None, frozenset(), None, kind, val))
        elif (m := _LINE_DEG.match(line)):
            ys = _varlist(m.group(2), lineno)
            xs = _varlist(m.group(3), lineno)
            kind, val = _parse_bound(m.group(4), lineno)
            raw.append((lineno, m.group(1), ys, xs, None, kind, val))
        elif (m := _LINE_NORM.match(line)):
            k, kk = int(m.group(2)), int(m.group(5))
            if k < 1 or k != kk:
                raise SemanticError(f"line {lineno}: norm order {k} must be positive and match the power {kk}")
            ys = _varlist(m.group(3), lineno)
            xs = _varlist(m.group(4), lineno)
            kind, val = _parse_bound(m.group(6), lineno)
            raw.append((lineno, m.group(1), ys, xs, k, kind, val))
        else:
            raise SemanticError(f"line {lineno}: unrecognised statistics line {line!r}")

    kinds = {kind for *_, kind, val in raw if not (kind == "int" and val == 1)}
    if header_mode is None:
        mode = "symbolic" if "sym" in kinds else "numeric"
    else:
        mode = header_mode
    if (mode == "numeric" and "sym" in kinds) or (mode == "symbolic" and "int" in kinds):
        raise SemanticError("statistics mix symbolic and numeric bounds")

    out: list[DegreeConstraint] = []
    for lineno, guard, ys, xs, k, kind, val in raw:
        bound = (Fraction(0) if kind == "int" else val) if mode == "symbolic" else val
        if ys is not None and not ys:
            raise SemanticError(f"line {lineno}: empty target variable set")
        if ys is not None and xs & ys:
            raise SemanticError(f"line {lineno}: conditioning sets overlap on {sorted(xs & ys)}")
        if query is None:
            if ys is None:
                raise SemanticError(f"line {lineno}: card() needs a query to resolve the schema of {guard}")
            out.append(DegreeConstraint(guard, xs, ys, bound, k))
            continue
        atoms = [a for a in query.atoms if a.symbol == guard]
        if not atoms:
            raise SemanticError(f"line {lineno}: relation {guard!r} does not occur in the query")
        if ys is None:
            seen = set()
            for a in atoms:
                if a.vars not in seen:
                    seen.add(a.vars)
                    out.append(DegreeConstraint(guard, frozenset(), a.varset, bound, k, a.vars))
            continue
        host = next((a for a in atoms if xs | ys <= a.varset), None)
        if host is None:
            bad = sorted((xs | ys) - set().union(*(a.varset for a in atoms)))
            raise SemanticError(f"line {lineno}: variables {bad or sorted(xs | ys)} outside the schema of {guard}")
        out.append(DegreeConstraint(guard, xs, ys, bound, k, host.vars))
    return StatisticsSet(tuple(out), mode, base_n if mode == "numeric" else None)


def _render_bound(c: DegreeConstraint, mode: str) -> str:
    if mode == "numeric":
        return str(c.bound)
    e = Fraction(c.bound)
    if e == 0:
        return "1"
    if e == 1:
        return "N"
    if e.denominator == 1:
        return f"N^{{{e.numerator}}}"
    return f"N^{{{e.numerator}/{e.denominator}}}"


def render_stats(s: StatisticsSet) -> str:
    lines = ["mode symbolic" if s.symbolic else
             ("mode numeric" + (f" N={s.base_N}" if s.base_N else ""))]
    for c in s.constraints:
        lines.append(f"{c.describe()} <= {_render_bound(c, s.mode)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- data

_INT = re.compile(r"-?\d+")


def parse_value(token: str):
    token = token.strip()
    return int(token) if _INT.fullmatch(token) else token


def load_database(directory: Union[str, Path], q: ConjunctiveQuery) -> Database:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"data directory {directory} does not exist")
    rels = {}
    for sym in dict.fromkeys(a.symbol for a in q.atoms):
        path = directory / f"{sym}.csv"
        if not path.exists():
            raise DataError(f"missing data file {path}")
        arities = {len(a.vars) for a in q.atoms if a.symbol == sym}
        if len(arities) != 1:
            raise DataError(f"relation {sym} used with different arities")
        arity = arities.pop()
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
        if not rows:
            raise DataError(f"{path}: missing header row")
        header = tuple(h.strip() for h in rows[0])
        if len(header) != arity:
            raise DataError(f"{path}: header {header} does not match arity {arity}")
        if not any(header == a.vars for a in q.atoms if a.symbol == sym):
            raise DataError(f"{path}: header {header} does not match any atom of {sym}")
        tuples = set()
        for lineno, r in enumerate(rows[1:], 2):
            if len(r) != arity:
                raise DataError(f"{path}:{lineno}: ragged row with {len(r)} fields, expected {arity}")
            tuples.add(tuple(parse_value(x) for x in r))
        rels[sym] = Relation(header, frozenset(tuples))
    return Database(rels)


def write_relation_csv(r: Relation, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(relation_csv(r))


def relation_csv(r: Relation) -> str:
    lines = [",".join(r.schema)]
    for t in r.sorted_rows():
        lines.append(",".join(str(v) for v in t))
    return "\n".join(lines) + "\n"


def atom_relation(db: Database, atom: Atom) -> Relation:
    return db[atom.symbol].rename(atom.vars)


def guard_relation(db: Database, c: DegreeConstraint) -> Relation:
    r = db[c.guard]
    return r.rename(c.atom_vars) if c.atom_vars else r


def infer_stats(db: Database, q: ConjunctiveQuery, max_cond_size: int) -> StatisticsSet:
    if max_cond_size < 0:
        raise SemanticError("max_cond_size must be non-negative")
    out: list[DegreeConstraint] = []
    seen = set()
    for a in q.atoms:
        if (a.symbol, a.vars) in seen:
            continue
        seen.add((a.symbol, a.vars))
        r = atom_relation(db, a)
        for size in range(0, min(max_cond_size, len(a.vars) - 1) + 1):
            for xs in combinations(a.vars, size):
                ys = frozenset(a.vars) - frozenset(xs)
                d = max(1, degree(r, ys, xs))
                out.append(DegreeConstraint(a.symbol, frozenset(xs), ys, d, None, a.vars))
    return StatisticsSet(tuple(out), "numeric", max(2, db.size))


@dataclass(frozen=True)
class Violation:
    constraint: DegreeConstraint
    actual: int
    witness: Optional[dict] = None

    def describe(self) -> str:
        w = "" if not self.witness else " at " + ", ".join(f"{k}={v}" for k, v in self.witness.items())
        return f"{self.constraint.describe()} <= {self.constraint.bound} violated: actual {self.actual}{w}"


def check_stats(db: Database, s: StatisticsSet) -> list[Violation]:
    if s.symbolic:
        raise ModeError("symbolic statistics cannot be checked against data")
    out = []
    for c in s.constraints:
        if c.guard not in db.relations:
            raise DataError(f"no data for guard {c.guard}")
        r = guard_relation(db, c)
        if c.is_norm:
            actual = lknorm_pow(r, c.ys, c.xs, c.k)
            if actual > c.bound:
                out.append(Violation(c, actual))
            continue
        degs = degree_map(r, c.ys, c.xs)
        if not degs:
            continue
        worst = min(degs.items(), key=lambda kv: (-kv[1], row_key(kv[0])))
        if worst[1] > c.bound:
            xo = [v for v in r.schema if v in c.xs]
            out.append(Violation(c, worst[1], dict(zip(xo, worst[0]))))
    return out
