import random
import sys
from pathlib import Path

import pytest

from cqopt.qmodel import load_database, parse_query, parse_stats
from cqopt.relcore import Database, Relation

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
sys.path.insert(0, str(Path(__file__).resolve().parent))

FOUR_CYCLE = "Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X)."
FOUR_CYCLE_FULL = "Q(X,Y,Z,W) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X)."
CARD4 = "mode symbolic\ncard(R) <= N\ncard(S) <= N\ncard(T) <= N\ncard(U) <= N\n"
FULL4 = CARD4 + "deg(U; X | W) <= 1\ndeg(U; W | X) <= N^{1/2}\n"

QUERIES = {
    "four_cycle": FOUR_CYCLE,
    "triangle": "Q(A,B,C) :- R(A,B), S(B,C), T(C,A).",
    "path5": "Q(A,B,C,D,E,F) :- R(A,B), S(B,C), T(C,D), U(D,E), V(E,F).",
    "cycle5": "Q(A,B,C,D,E) :- R(A,B), S(B,C), T(C,D), U(D,E), V(E,A).",
    "free5": "Q(A,C,E) :- R(A,B), S(B,C), T(C,D), U(D,E), V(E,A).",
}


def card_stats(q, mode="symbolic"):
    syms = dict.fromkeys(a.symbol for a in q.atoms)
    return parse_stats("mode symbolic\n" + "".join(f"card({s}) <= N\n" for s in syms), q)


def random_db(q, rng: random.Random, max_tuples: int = 40, max_dom: int = 8) -> Database:
    rels = {}
    dom = rng.randint(1, max_dom)
    for a in q.atoms:
        if a.symbol in rels:
            continue
        n = rng.randint(0, max_tuples)
        rows = {tuple(rng.randrange(dom) for _ in a.vars) for _ in range(n)}
        rels[a.symbol] = Relation.of(a.vars, rows)
    return Database(rels)


def worst_case_db(n: int, symbols="RSTU") -> Database:
    h = n // 2
    rel = Relation.of(("a", "b"), {(i, 1) for i in range(1, h + 1)} | {(1, j) for j in range(1, h + 1)})
    return Database({s: rel for s in symbols})


@pytest.fixture
def q4():
    return parse_query(FOUR_CYCLE)


@pytest.fixture
def q4full():
    return parse_query(FOUR_CYCLE_FULL)


@pytest.fixture
def s4(q4):
    return parse_stats(CARD4, q4)


@pytest.fixture
def sample4(q4):
    return load_database(DATA / "sample4", q4)
