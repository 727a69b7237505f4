"""Set-semantics relations, the operators used by every plan, and Yannakakis."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .errors import ArgumentError, PlanError, SchemaError

Value = Union[int, str]
Row = tuple


def value_key(v: Value) -> tuple:
    """Total order on domain values: integers (numerically) before strings."""
    if isinstance(v, bool):
        return (0, int(v), "")
    if isinstance(v, int):
        return (0, v, "")
    return (1, 0, str(v))


def row_key(row: Row) -> tuple:
    return tuple(value_key(v) for v in row)


def _ordered(schema: Sequence[str], onto: Iterable[str]) -> tuple[str, ...]:
    # sets follow the relation's column order; sequences keep the caller's order
    if isinstance(onto, (set, frozenset)):
        return tuple(v for v in schema if v in onto)
    return tuple(onto)


@dataclass(frozen=True)
class Relation:
    schema: tuple[str, ...]
    tuples: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if len(set(self.schema)) != len(self.schema):
            raise SchemaError(f"duplicate variable in schema {self.schema}")
        n = len(self.schema)
        for t in self.tuples:
            if len(t) != n:
                raise SchemaError(f"tuple {t} does not match arity {n}")

    @staticmethod
    def of(schema: Sequence[str], rows: Iterable[Sequence[Value]] = ()) -> "Relation":
        return Relation(tuple(schema), frozenset(tuple(r) for r in rows))

    @staticmethod
    def empty(schema: Sequence[str]) -> "Relation":
        return Relation(tuple(schema), frozenset())

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self):
        return iter(self.tuples)

    @property
    def vars(self) -> frozenset:
        return frozenset(self.schema)

    def sorted_rows(self) -> list[Row]:
        return sorted(self.tuples, key=row_key)

    def index_of(self, var: str) -> int:
        try:
            return self.schema.index(var)
        except ValueError:
            raise SchemaError(f"unknown variable {var!r} in {self.schema}") from None

    def positions(self, vars_: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.index_of(v) for v in vars_)

    def reorder(self, schema: Sequence[str]) -> "Relation":
        schema = tuple(schema)
        if set(schema) != set(self.schema) or len(schema) != len(self.schema):
            raise SchemaError(f"cannot reorder {self.schema} as {schema}")
        pos = self.positions(schema)
        return Relation(schema, frozenset(tuple(t[i] for i in pos) for t in self.tuples))

    def rename(self, schema: Sequence[str]) -> "Relation":
        """Positional rename (used for atoms sharing a relation symbol)."""
        schema = tuple(schema)
        if len(schema) != len(self.schema):
            raise SchemaError(f"rename arity mismatch {self.schema} -> {schema}")
        return Relation(schema, self.tuples)

    def same_as(self, other: "Relation") -> bool:
        if set(self.schema) != set(other.schema):
            return False
        return self == other.reorder(self.schema)


@dataclass(frozen=True)
class Database:
    relations: Mapping[str, Relation]

    @property
    def size(self) -> int:
        return sum(len(r) for r in self.relations.values())

    def __getitem__(self, symbol: str) -> Relation:
        return self.relations[symbol]


def join(left: Relation, right: Relation) -> Relation:
    shared = [v for v in left.schema if v in right.vars]
    extra = [v for v in right.schema if v not in left.vars]
    out_schema = left.schema + tuple(extra)
    lpos = left.positions(shared)
    rpos = right.positions(shared)
    epos = right.positions(extra)
    # build on the smaller side
    if len(left) <= len(right):
        table = defaultdict(list)
        for t in left.tuples:
            table[tuple(t[i] for i in lpos)].append(t)
        out = set()
        for s in right.tuples:
            key = tuple(s[i] for i in rpos)
            tail = tuple(s[i] for i in epos)
            for t in table.get(key, ()):
                out.add(t + tail)
    else:
        table = defaultdict(list)
        for s in right.tuples:
            table[tuple(s[i] for i in rpos)].append(tuple(s[i] for i in epos))
        out = set()
        for t in left.tuples:
            for tail in table.get(tuple(t[i] for i in lpos), ()):
                out.add(t + tail)
    return Relation(out_schema, frozenset(out))


def join_all(rels: Sequence[Relation]) -> Relation:
    if not rels:
        return Relation((), frozenset({()}))
    acc = rels[0]
    for r in rels[1:]:
        acc = join(acc, r)
    return acc


def project(r: Relation, onto: Iterable[str]) -> Relation:
    schema = _ordered(r.schema, onto)
    for v in (onto if isinstance(onto, (set, frozenset)) else schema):
        if v not in r.vars:
            raise SchemaError(f"cannot project {r.schema} onto unknown variable {v!r}")
    pos = r.positions(schema)
    return Relation(schema, frozenset(tuple(t[i] for i in pos) for t in r.tuples))


def semijoin(left: Relation, right: Relation) -> Relation:
    shared = [v for v in left.schema if v in right.vars]
    lpos = left.positions(shared)
    rpos = right.positions(shared)
    keys = {tuple(s[i] for i in rpos) for s in right.tuples}
    return Relation(left.schema, frozenset(t for t in left.tuples if tuple(t[i] for i in lpos) in keys))


def union(a: Relation, b: Relation) -> Relation:
    if a.schema != b.schema:
        b = b.reorder(a.schema)
    return Relation(a.schema, a.tuples | b.tuples)


def _check_split(r: Relation, ys: Iterable[str], xs: Iterable[str]) -> tuple[tuple, tuple]:
    ys, xs = set(ys), set(xs)
    if ys & xs:
        raise ArgumentError(f"conditioning sets overlap: {sorted(ys & xs)}")
    for v in ys | xs:
        r.index_of(v)
    return _ordered(r.schema, frozenset(xs)), _ordered(r.schema, frozenset(ys))


def degree_map(r: Relation, ys: Iterable[str], xs: Iterable[str]) -> dict[Row, int]:
    """Per x-binding count of distinct y-projections."""
    xo, yo = _check_split(r, ys, xs)
    xp, yp = r.positions(xo), r.positions(yo)
    groups: dict[Row, set] = defaultdict(set)
    for t in r.tuples:
        groups[tuple(t[i] for i in xp)].add(tuple(t[i] for i in yp))
    return {k: len(v) for k, v in groups.items()}


def degree(r: Relation, ys: Iterable[str], xs: Iterable[str]) -> int:
    degs = degree_map(r, ys, xs)
    return max(degs.values(), default=0)


def lknorm_pow(r: Relation, ys: Iterable[str], xs: Iterable[str], k: int) -> int:
    if k < 1:
        raise ArgumentError(f"norm order must be a positive integer, got {k}")
    return sum(d ** k for d in degree_map(r, ys, xs).values())


def partition_by_degree(r: Relation, ys: Iterable[str], xs: Iterable[str],
                        threshold) -> tuple[Relation, Relation]:
    degs = degree_map(r, ys, xs)
    xo, _ = _check_split(r, ys, xs)
    xp = r.positions(xo)
    thr = Fraction(threshold)
    light, heavy = set(), set()
    for t in r.tuples:
        (light if degs[tuple(t[i] for i in xp)] <= thr else heavy).add(t)
    return Relation(r.schema, frozenset(light)), Relation(r.schema, frozenset(heavy))


# --------------------------------------------------------------------------- Yannakakis


@dataclass(frozen=True)
class JoinTree:
    """Tree of bags; bag i has variables relations[i].schema."""

    relations: tuple[Relation, ...]
    edges: tuple[tuple[int, int], ...] = ()

    def bag(self, i: int) -> frozenset:
        return self.relations[i].vars

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(len(self.relations))}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for v in adj.values():
            v.sort()
        return adj

    def validate(self) -> None:
        n = len(self.relations)
        if n == 0:
            raise PlanError("join tree has no bags")
        if len(self.edges) != n - 1:
            raise PlanError(f"{n} bags need {n - 1} edges, got {len(self.edges)}")
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise PlanError(f"bad edge {(a, b)}")
        adj = self.adjacency()
        seen = {0}
        todo = [0]
        while todo:
            u = todo.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        if len(seen) != n:
            raise PlanError("join tree is disconnected")
        # running intersection: bags holding each variable induce a connected subtree
        for var in set().union(*(self.bag(i) for i in range(n))):
            holders = {i for i in range(n) if var in self.bag(i)}
            start = min(holders)
            seen = {start}
            todo = [start]
            while todo:
                u = todo.pop()
                for w in adj[u]:
                    if w in holders and w not in seen:
                        seen.add(w)
                        todo.append(w)
            if seen != holders:
                raise PlanError(f"running intersection violated for variable {var!r}")


def _bag_order_key(bag: frozenset) -> tuple:
    return tuple(sorted(bag))


def yannakakis(tree: JoinTree, free: Iterable[str], stats: dict | None = None) -> Relation:
    """Evaluate the projection of the tree's join onto `free`.

    `stats`, when given, receives `produced`: tuples materialized by projections
    plus the output, the quantity bounded by the linearity check.
    """
    tree.validate()
    all_vars = set().union(*(tree.bag(i) for i in range(len(tree.relations))))
    if isinstance(free, (set, frozenset)):
        order = []
        for r in tree.relations:
            order += [v for v in r.schema if v in free and v not in order]
        free_order = tuple(order)
    else:
        free_order = tuple(free)
    free_set = set(free_order)
    missing = free_set - all_vars
    if missing:
        raise SchemaError(f"free variables {sorted(missing)} not covered by any bag")
    n = len(tree.relations)
    adj = tree.adjacency()
    root = min(range(n), key=lambda i: (-len(tree.bag(i) & free_set), _bag_order_key(tree.bag(i)), i))
    parent = {root: None}
    bfs = [root]
    q = deque([root])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in parent:
                parent[w] = u
                bfs.append(w)
                q.append(w)
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for u in bfs[1:]:
        children[parent[u]].append(u)

    rels = list(tree.relations)
    for u in reversed(bfs[1:]):
        p = parent[u]
        rels[p] = semijoin(rels[p], rels[u])
    for u in bfs[1:]:
        rels[u] = semijoin(rels[u], rels[parent[u]])
    produced = 0
    if any(len(r) == 0 for r in rels):
        if stats is not None:
            stats["produced"] = 0
        return Relation.empty(free_order)

    # subtree free variables; children whose free part already sits in the parent are
    # fully accounted for by the reduction and can be dropped
    sub_free: dict[int, set] = {}
    for u in reversed(bfs):
        s = set(tree.bag(u) & free_set)
        for c in children[u]:
            s |= sub_free[c]
        sub_free[u] = s
    kept = [root]
    kept_set = {root}
    for u in bfs[1:]:
        p = parent[u]
        if p in kept_set and not sub_free[u] <= tree.bag(p):
            kept.append(u)
            kept_set.add(u)

    proj: dict[int, Relation] = {}
    for u in kept:
        neigh = set()
        if parent[u] is not None:
            neigh |= tree.bag(parent[u])
        for c in children[u]:
            if c in kept_set:
                neigh |= tree.bag(c)
        keep = tree.bag(u) & (free_set | neigh)
        proj[u] = project(rels[u], frozenset(keep))
        produced += len(proj[u])

    # backtracking over kept nodes in pre-order; shared variables with earlier nodes
    # are always in the parent (running intersection)
    plan = []
    for u in kept:
        r = proj[u]
        if parent[u] is None:
            plan.append((r.schema, (), {(): list(r.tuples)}))
            continue
        key_vars = tuple(v for v in r.schema if v in proj[parent[u]].vars)
        kpos = r.positions(key_vars)
        index: dict[Row, list] = defaultdict(list)
        for t in r.tuples:
            index[tuple(t[i] for i in kpos)].append(t)
        plan.append((r.schema, key_vars, index))

    out = set()
    assign: dict[str, Value] = {}

    def rec(k: int) -> None:
        if k == len(plan):
            out.add(tuple(assign[v] for v in free_order))
            return
        schema, key_vars, index = plan[k]
        for t in index.get(tuple(assign[v] for v in key_vars), ()):
            for v, x in zip(schema, t):
                assign[v] = x
            rec(k + 1)

    rec(0)
    produced += len(out)
    if stats is not None:
        stats["produced"] = produced
    return Relation(free_order, frozenset(out))
