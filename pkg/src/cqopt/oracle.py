"""Brute-force reference evaluation and DDR model checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import GuardExceeded
from .qmodel import ConjunctiveQuery, DisjunctiveRule, atom_relation
from .relcore import Database, Relation, row_key

GUARD = 10 ** 6


@dataclass(frozen=True)
class OracleReport:
    missing: tuple = ()
    extra: tuple = ()
    schema: tuple = ()

    @property
    def match(self) -> bool:
        return not self.missing and not self.extra

    def describe(self, limit: int = 10) -> str:
        if self.match:
            return "match"
        parts = []
        if self.missing:
            parts.append(f"missing {len(self.missing)}: " + ", ".join(map(str, self.missing[:limit])))
        if self.extra:
            parts.append(f"extra {len(self.extra)}: " + ", ".join(map(str, self.extra[:limit])))
        return "mismatch; " + "; ".join(parts)


def _body_vars(atoms) -> tuple[str, ...]:
    out: list[str] = []
    for a in atoms:
        out += [v for v in a.vars if v not in out]
    return tuple(out)


def body_join(atoms, db: Database, guard: int = GUARD) -> Relation:
    """All assignments satisfying every atom, by nested loops with early filtering."""
    vars_ = _body_vars(atoms)
    rels = [atom_relation(db, a) for a in atoms]
    rows: list[dict] = [{}]
    for r in rels:
        nxt = []
        for b in rows:
            for t in r.tuples:
                ok = True
                ext = dict(b)
                for v, x in zip(r.schema, t):
                    if ext.setdefault(v, x) != x:
                        ok = False
                        break
                if ok:
                    nxt.append(ext)
                    if len(nxt) > guard:
                        raise GuardExceeded(f"body join exceeds {guard} tuples")
        rows = nxt
    return Relation(vars_, frozenset(tuple(b[v] for v in vars_) for b in rows))


def brute_join(q: ConjunctiveQuery, db: Database, guard: int = GUARD) -> Relation:
    body = body_join(q.atoms, db, guard)
    pos = body.positions(q.head_vars)
    return Relation(q.head_vars, frozenset(tuple(t[i] for i in pos) for t in body.tuples))


def compare(reference: Relation, candidate: Relation) -> OracleReport:
    cand = candidate.reorder(reference.schema) if set(candidate.schema) == set(reference.schema) else None
    if cand is None:
        return OracleReport(tuple(reference.sorted_rows()), tuple(candidate.sorted_rows()), reference.schema)
    missing = sorted(reference.tuples - cand.tuples, key=row_key)
    extra = sorted(cand.tuples - reference.tuples, key=row_key)
    return OracleReport(tuple(missing), tuple(extra), reference.schema)


def check_ddr_model(ddr: DisjunctiveRule, db: Database, candidate: Mapping[frozenset, Relation],
                    guard: int = GUARD) -> OracleReport:
    """Uncovered body tuples are reported as `missing`."""
    body = body_join(ddr.body, db, guard)
    heads = []
    for b in ddr.bags:
        r = candidate.get(b)
        if r is None:
            heads.append(((), frozenset()))
            continue
        heads.append((body.positions(r.schema), r.tuples))
    missing = [t for t in body.sorted_rows()
               if not any(tuple(t[i] for i in pos) in ts for pos, ts in heads if pos)]
    return OracleReport(tuple(missing), (), body.schema)


def greedy_ddr_model(ddr: DisjunctiveRule, db: Database, guard: int = GUARD,
                     order: Optional[tuple] = None) -> dict[frozenset, Relation]:
    body = body_join(ddr.body, db, guard)
    order = order or body.schema
    out = {}
    heads = []
    for b in ddr.bags:
        sch = tuple(v for v in order if v in b)
        heads.append((b, sch, body.positions(sch), set()))
    for t in body.sorted_rows():
        projs = [tuple(t[i] for i in pos) for _, _, pos, _ in heads]
        if any(p in rows for p, (_, _, _, rows) in zip(projs, heads)):
            continue
        for p, (_, _, _, rows) in zip(projs, heads):
            rows.add(p)
    for b, sch, _, rows in heads:
        out[b] = Relation(sch, frozenset(rows))
    return out
