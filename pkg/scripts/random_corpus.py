"""Seeded random-instance check: both plans against the brute-force oracle.

Also records, per instance, the largest rule output against its bound ceil(B).
"""

import argparse
import random
import time

from cqopt.oracle import brute_join
from cqopt.pandaexec import evaluate_cq_adaptive, evaluate_cq_static
from cqopt.qmodel import infer_stats, parse_query, parse_stats
from cqopt.relcore import Database, Relation

QUERIES = {
    "four_cycle": "Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).",
    "triangle": "Q(A,B,C) :- R(A,B), S(B,C), T(C,A).",
    "path5": "Q(A,B,C,D,E,F) :- R(A,B), S(B,C), T(C,D), U(D,E), V(E,F).",
    "cycle5": "Q(A,B,C,D,E) :- R(A,B), S(B,C), T(C,D), U(D,E), V(E,A).",
    "free5": "Q(A,C,E) :- R(A,B), S(B,C), T(C,D), U(D,E), V(E,A).",
}


def random_db(q, rng: random.Random, max_tuples: int, max_dom: int) -> Database:
    rels = {}
    dom = rng.randint(1, max_dom)
    for a in q.atoms:
        rows = {tuple(rng.randrange(dom) for _ in a.vars) for _ in range(rng.randint(0, max_tuples))}
        rels[a.symbol] = Relation.of(a.vars, rows)
    return Database(rels)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0, help="first seed")
    ap.add_argument("--stats", choices=("card", "infer"), default="card",
                    help="symbolic cardinalities, or tight numeric stats inferred per instance (slower)")
    ap.add_argument("--max-tuples", type=int, default=40)
    ap.add_argument("--max-dom", type=int, default=8)
    args = ap.parse_args()
    names = sorted(QUERIES)
    bad, worst, t0 = 0, 0.0, time.perf_counter()
    for seed in range(args.seed, args.seed + args.seeds):
        name = names[seed % len(names)]
        q = parse_query(QUERIES[name])
        db = random_db(q, random.Random(seed), args.max_tuples, args.max_dom)
        if args.stats == "card":
            s = parse_stats("mode symbolic\n" + "".join(f"card({a.symbol}) <= N\n" for a in q.atoms), q)
        else:
            s = infer_stats(db, q, 1)
        ref = brute_join(q, db)
        ada = evaluate_cq_adaptive(q, s, db)
        sta = evaluate_cq_static(q, s, db)
        for rep in ada.reports + sta.reports:
            if rep.ceil_bound:
                worst = max(worst, max(rep.output_sizes.values(), default=0) / rep.ceil_bound)
        miss = (ada.output != ref) + (sta.output != ref)
        bad += miss
        if miss:
            print(f"seed {seed} ({name}): MISMATCH")
    print(f"{args.seeds} instances, {bad} mismatches, max output/ceil(B) = {worst:.3f}, "
          f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
