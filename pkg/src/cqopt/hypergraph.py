"""Acyclicity, tree decompositions, bag selectors and disjunctive rules."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional, Sequence

from .errors import SizeError
from .qmodel import ConjunctiveQuery, DisjunctiveRule

MAX_VARS = 12


@dataclass(frozen=True)
class Hypergraph:
    vertices: frozenset
    edges: tuple[frozenset, ...]

    @staticmethod
    def of(edges: Iterable[Iterable[str]]) -> "Hypergraph":
        es = tuple(frozenset(e) for e in edges)
        return Hypergraph(frozenset().union(*es) if es else frozenset(), es)


@dataclass(frozen=True)
class TreeShape:
    """Nodes with tree edges (indices into nodes)."""

    nodes: tuple[frozenset, ...]
    edges: tuple[tuple[int, int], ...]


def gyo_acyclic(h: Hypergraph) -> tuple[bool, Optional[TreeShape]]:
    edges = list(h.edges)
    if not edges:
        return True, TreeShape((), ())
    cur = {i: set(e) for i, e in enumerate(edges)}
    alive = list(range(len(edges)))
    links: list[tuple[int, int]] = []
    changed = True
    while changed and len(alive) > 1:
        changed = False
        count: dict[str, int] = {}
        for i in alive:
            for v in cur[i]:
                count[v] = count.get(v, 0) + 1
        for i in alive:
            lonely = {v for v in cur[i] if count[v] == 1}
            if lonely:
                cur[i] -= lonely
                changed = True
        for i in list(alive):
            host = next((j for j in alive if j != i and cur[i] <= cur[j]), None)
            if host is not None:
                alive.remove(i)
                links.append((i, host))
                changed = True
    if len(alive) > 1:
        return False, None
    return True, TreeShape(tuple(edges), tuple(links))


def is_join_tree(nodes: Sequence[frozenset], edges: Sequence[tuple[int, int]]) -> bool:
    """Tree check plus running intersection."""
    n = len(nodes)
    if n == 0:
        return True
    if len(edges) != n - 1:
        return False
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)

    def connected(sub: set) -> bool:
        start = next(iter(sub))
        seen, todo = {start}, [start]
        while todo:
            u = todo.pop()
            for w in adj[u]:
                if w in sub and w not in seen:
                    seen.add(w)
                    todo.append(w)
        return seen == sub

    if not connected(set(range(n))):
        return False
    for v in set().union(*nodes):
        if not connected({i for i in range(n) if v in nodes[i]}):
            return False
    return True


# --------------------------------------------------------------------------- tree decompositions


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple[frozenset, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def is_trivial(self) -> bool:
        return len(self.bags) == 1

    def covering_bag(self, vars_: frozenset) -> int:
        for i, b in enumerate(self.bags):
            if vars_ <= b:
                return i
        raise ValueError(f"no bag covers {sorted(vars_)}")


def _var_index(q: ConjunctiveQuery) -> dict[str, int]:
    return {v: i for i, v in enumerate(q.all_vars)}


def bag_key(bag: frozenset, order: dict[str, int]) -> tuple:
    return tuple(sorted(order.get(v, len(order)) for v in bag))


def _make_td(bags: Iterable[frozenset], order: dict[str, int]) -> TreeDecomposition:
    bags = sorted(set(bags), key=lambda b: bag_key(b, order))
    ok, shape = gyo_acyclic(Hypergraph.of(bags))
    if not ok:
        raise ValueError("bags do not form an acyclic hypergraph")
    return TreeDecomposition(tuple(bags), tuple(sorted(tuple(sorted(e)) for e in shape.edges)))


def td_sort_key(td: TreeDecomposition, order: dict[str, int]) -> tuple:
    return (td.is_trivial, tuple(sorted(bag_key(b, order) for b in td.bags)))


def td_is_free_connex(td: TreeDecomposition, free: Iterable[str]) -> bool:
    free = frozenset(free)
    if not free:
        return True
    ok, _ = gyo_acyclic(Hypergraph.of(list(td.bags) + [free]))
    return ok


def check_td(td: TreeDecomposition, q: ConjunctiveQuery) -> list[str]:
    """Structural problems with td as a decomposition of q (empty when valid)."""
    problems = []
    for a in q.atoms:
        if not any(a.varset <= b for b in td.bags):
            problems.append(f"atom {a.render()} not covered")
    if not is_join_tree(td.bags, td.edges):
        problems.append("tree edges violate running intersection")
    if not gyo_acyclic(Hypergraph.of(td.bags))[0]:
        problems.append("bags are not acyclic")
    return problems


def _maximal(bags: Iterable[frozenset]) -> frozenset:
    bags = set(bags)
    return frozenset(b for b in bags if not any(b < c for c in bags))


def enumerate_tds(q: ConjunctiveQuery, free_connex_only: bool = True) -> list[TreeDecomposition]:
    vars_ = q.all_vars
    if len(vars_) > MAX_VARS:
        raise SizeError(f"{len(vars_)} variables exceed the cap of {MAX_VARS}")
    order = _var_index(q)
    adj: dict[str, set] = {v: set() for v in vars_}
    for a in q.atoms:
        for u in a.vars:
            adj[u] |= a.varset - {u}

    def neighbourhood(v: str, eliminated: frozenset) -> frozenset:
        # vertices reachable from v through already-eliminated vertices
        seen, todo, out = {v}, [v], set()
        while todo:
            u = todo.pop()
            for w in adj[u]:
                if w in seen:
                    continue
                seen.add(w)
                if w in eliminated:
                    todo.append(w)
                else:
                    out.add(w)
        return frozenset(out)

    results: set[frozenset] = set()
    seen_states: set = set()
    stack = [(frozenset(), frozenset())]
    all_v = frozenset(vars_)
    while stack:
        eliminated, bags = stack.pop()
        if (eliminated, bags) in seen_states:
            continue
        seen_states.add((eliminated, bags))
        if eliminated == all_v:
            results.add(bags)
            continue
        for v in vars_:
            if v in eliminated:
                continue
            bag = frozenset({v}) | neighbourhood(v, eliminated)
            stack.append((eliminated | {v}, _maximal(bags | {bag})))

    tds = {}
    for bags in results:
        td = _make_td(bags, order)
        tds[td.bags] = td
    trivial = _make_td([all_v], order)
    tds.setdefault(trivial.bags, trivial)
    out = [td for td in tds.values() if not free_connex_only or td_is_free_connex(td, q.free)]
    out.sort(key=lambda td: td_sort_key(td, order))
    return out


def refines(finer: TreeDecomposition, coarser: TreeDecomposition) -> bool:
    """Every bag of `finer` sits inside some bag of `coarser`."""
    return all(any(b <= c for c in coarser.bags) for b in finer.bags)


def minimal_tds(tds: Sequence[TreeDecomposition]) -> list[TreeDecomposition]:
    """Drop decompositions refined by another one.

    If T' refines T then max over bags of h is no larger on T' for every polymatroid,
    so T never attains the minimum over decompositions and can be skipped.
    """
    keep = []
    for i, t in enumerate(tds):
        dominated = False
        for j, u in enumerate(tds):
            if i == j or not refines(u, t):
                continue
            if not refines(t, u) or j < i:
                dominated = True
                break
        if not dominated:
            keep.append(t)
    return keep


# --------------------------------------------------------------------------- selectors and rules


@dataclass(frozen=True)
class BagSelector:
    choice: tuple[frozenset, ...]

    def distinct_bags(self) -> tuple[frozenset, ...]:
        return tuple(dict.fromkeys(self.choice))

    def minimal_bags(self) -> tuple[frozenset, ...]:
        bags = self.distinct_bags()
        return tuple(b for b in bags if not any(c < b for c in bags))


def bag_selectors(tds: Sequence[TreeDecomposition], prune: bool = False) -> list[BagSelector]:
    if not tds:
        raise ValueError("need at least one tree decomposition")
    sels = [BagSelector(tuple(c)) for c in product(*(td.bags for td in tds))]
    if not prune:
        return sels
    seen, out = set(), []
    for s in sels:
        key = frozenset(s.minimal_bags())
        if key not in seen:
            seen.add(key)
            out.append(BagSelector(s.minimal_bags()))
    return out


def bag_name(bag: Iterable[str], order: Optional[Sequence[str]] = None) -> str:
    bag = list(bag)
    if order is not None:
        idx = {v: i for i, v in enumerate(order)}
        bag.sort(key=lambda v: (idx.get(v, len(idx)), v))
    else:
        bag.sort()
    if all(len(v) == 1 for v in bag):
        return "".join(bag)
    return ",".join(bag)


def build_ddr(q: ConjunctiveQuery, sel: BagSelector) -> DisjunctiveRule:
    heads = []
    for i, b in enumerate(sel.distinct_bags()):
        heads.append((b, f"Q_{bag_name(b, q.all_vars).replace(',', '_')}"))
    return DisjunctiveRule(tuple(heads), q.atoms)


def atom_assignment(q: ConjunctiveQuery, td: TreeDecomposition) -> dict[int, list[int]]:
    """Bag index -> atoms assigned to it (each atom to its first covering bag)."""
    out: dict[int, list[int]] = {i: [] for i in range(len(td.bags))}
    for k, a in enumerate(q.atoms):
        out[td.covering_bag(a.varset)].append(k)
    return out
