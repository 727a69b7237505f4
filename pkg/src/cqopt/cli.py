"""Command-line entry point: bound, width, prove, run, verify, stats."""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import (ArgumentError, CqoptError, DataError, GuardExceeded, ModeError, PlanError, QuerySyntaxError,
                     SchemaError, SemanticError, UnboundedError)
from .hypergraph import bag_name, enumerate_tds
from .infobound import fhtw, fmt_exponent, polymatroid_bound, render_width_report, subw
from .oracle import brute_join, compare
from .pandaexec import evaluate_cq_adaptive, evaluate_cq_static, resolve_base, symbolic_violations
from .proofmachine import (Term, construct_proof_sequence, identity_form, reset, to_integral,
                           verify_proof_sequence)
from .qmodel import (ConjunctiveQuery, StatisticsSet, check_stats, infer_stats, load_database, parse_query,
                     parse_stats, relation_csv, render_stats)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_PARSE = 2
EXIT_UNBOUNDED = 3
EXIT_STATS = 4
EXIT_GUARD = 5


class CliExit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    query: Path
    stats: Path
    data: Path
    plan: str = "adaptive"
    td: str = "best"
    output: Optional[Path] = None
    report: Optional[Path] = None
    json: bool = False
    validate: bool = True
    base_n: Optional[int] = None

    def __post_init__(self):
        if self.plan not in ("static", "adaptive", "oracle"):
            raise ArgumentError(f"unknown plan {self.plan!r}")
        if self.td != "best" and not self.td.isdigit():
            raise ArgumentError("--td takes an index or 'best'")


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliExit(EXIT_PARSE, f"cannot read {path}: {e.strerror}") from None


def _load_query(path) -> ConjunctiveQuery:
    return parse_query(_read(path))


def _load_stats(path, q: ConjunctiveQuery) -> StatisticsSet:
    return parse_stats(_read(path), q)


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(text)


def _parse_target(target: str, q: ConjunctiveQuery) -> frozenset:
    if target == "head":
        return frozenset(q.head_vars)
    names = [v.strip() for v in target.replace(" ", ",").split(",") if v.strip()]
    if len(names) == 1 and names[0] not in q.all_vars and all(c in q.all_vars for c in names[0]):
        names = list(names[0])
    unknown = [v for v in names if v not in q.all_vars]
    if unknown or not names:
        raise SemanticError(f"target has unknown variables {unknown}")
    return frozenset(names)


# --------------------------------------------------------------------------- commands


def cmd_bound(args) -> int:
    q = _load_query(args.query)
    s = _load_stats(args.stats, q)
    target = _parse_target(args.target, q)
    res = polymatroid_bound(target, s, q.all_vars)
    if not res.bounded:
        raise CliExit(EXIT_UNBOUNDED, f"the statistics do not bound h({bag_name(target, q.all_vars)})")
    order = q.all_vars
    witness = {bag_name(k, order): str(v) for k, v in sorted(
        res.witness.coords.items(), key=lambda kv: (len(kv[0]), sorted(order.index(x) for x in kv[0])))}
    lines = [f"bound(log_N) = {fmt_exponent(res.value, s.symbolic)}"]
    if not s.symbolic:
        lines.append(f"exact = {res.value}")
    lines.append(f"certificate: {res.flow.render(order)}")
    lines.append("witness: " + ", ".join(f"h({k})={v}" for k, v in witness.items()))
    _emit(args, {"target": bag_name(target, order), "value": str(res.value),
                 "value_float": float(res.value), "mode": s.mode,
                 "certificate": res.flow.render(order), "witness": witness}, "\n".join(lines))
    return EXIT_OK


def cmd_width(args) -> int:
    q = _load_query(args.query)
    s = _load_stats(args.stats, q)
    if args.measure == "fhtw":
        res = fhtw(q, s)
        detail = [{"td": [bag_name(b, q.all_vars) for b in c.td.bags],
                   "value": None if c.value is None else str(c.value)} for c in res.per_td]
    else:
        res = subw(q, s, threads=args.threads)
        detail = [{"selector": [bag_name(b, q.all_vars) for b in p.selector.choice],
                   "value": None if p.value is None else str(p.value)} for p in res.per_selector]
    if res.value is None:
        raise CliExit(EXIT_UNBOUNDED, f"{args.measure} is unbounded under these statistics")
    _emit(args, {"measure": args.measure, "value": str(res.value), "value_float": float(res.value),
                 "breakdown": detail}, render_width_report(q, s, res))
    return EXIT_OK


def cmd_prove(args) -> int:
    q = _load_query(args.query)
    s = _load_stats(args.stats, q)
    res = subw(q, s)
    if not 0 <= args.selector < len(res.per_selector):
        raise CliExit(EXIT_PARSE, f"selector index {args.selector} out of range 0..{len(res.per_selector) - 1}")
    sb = res.per_selector[args.selector]
    order = q.all_vars
    if sb.flow is None:
        raise CliExit(EXIT_UNBOUNDED, f"selector {args.selector} is unbounded")
    integral, L = to_integral(sb.flow)
    ident = identity_form(integral)
    seq = construct_proof_sequence(ident)
    ok, msg = verify_proof_sequence(integral, seq)
    sel = ", ".join(bag_name(b, order) for b in sb.selector.choice)
    lines = [f"selector {args.selector} ({sel}): {fmt_exponent(sb.value, s.symbolic)}",
             f"inequality (L = {L}): {integral.render(order)}", "proof sequence:"]
    lines += ["  " + line for line in seq.render(order).splitlines()] or ["  (empty)"]
    if seq.slack:
        lines.append("slack: " + " + ".join(t.render(order) for t in seq.slack.elements()))
    lines.append("VERIFIED" if ok else f"NOT VERIFIED: {msg}")
    payload = {"selector": sel, "value": str(sb.value), "L": L, "inequality": integral.render(order),
               "steps": [st.render(order) for st in seq.steps], "verified": ok}
    if args.drop:
        drop = Term(_parse_target(args.drop, q))
        ineq, _, lost = reset(ident, drop)
        lines.append(f"reset {drop.render(order)}: {ineq.render(order)}"
                     + (f" (lost {lost.render(order)})" if lost else ""))
        payload["reset"] = ineq.render(order)
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if ok else EXIT_MISMATCH


def _validate(db, s: StatisticsSet, base_n: Optional[int]) -> None:
    if s.symbolic:
        problems = symbolic_violations(db, s, base_n) if base_n is not None else []
    else:
        problems = [v.describe() for v in check_stats(db, s)]
    if problems:
        raise CliExit(EXIT_STATS, "statistics violated:\n  " + "\n  ".join(problems))


def cmd_run(args) -> int:
    cfg = RunConfig(Path(args.query), Path(args.stats), Path(args.data), args.plan, args.td,
                    Path(args.output) if args.output else None, Path(args.report) if args.report else None,
                    args.json, not args.no_validate, args.base_n)
    q = _load_query(cfg.query)
    s = _load_stats(cfg.stats, q)
    db = load_database(cfg.data, q)
    if cfg.validate:
        _validate(db, s, cfg.base_n)
    base_n = cfg.base_n
    if s.symbolic and base_n is None:
        base_n = resolve_base(s, db)
    report: dict = {"plan": cfg.plan, "base_N": base_n}
    if cfg.plan == "oracle":
        out = brute_join(q, db)
    elif cfg.plan == "static":
        td = None
        if cfg.td != "best":
            tds = enumerate_tds(q)
            i = int(cfg.td)
            if i >= len(tds):
                raise CliExit(EXIT_PARSE, f"td index {i} out of range 0..{len(tds) - 1}")
            td = tds[i]
        res = evaluate_cq_static(q, s, db, td, base_n)
        out = res.output
        report.update(_cq_report(q, res))
    else:
        res = evaluate_cq_adaptive(q, s, db, base_n)
        out = res.output
        report.update(_cq_report(q, res))
    text = relation_csv(out.reorder(q.head_vars) if out.schema != q.head_vars else out)
    report["output_size"] = len(out)
    if cfg.output:
        cfg.output.write_text(text)
    else:
        sys.stdout.write(text)
    if cfg.report:
        cfg.report.write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n" if cfg.json
                              else _report_text(report))
    return EXIT_OK


def _cq_report(q: ConjunctiveQuery, res) -> dict:
    return {
        "plan_used": res.plan,
        "bag_sizes": {bag_name(b, q.all_vars): n for b, n in res.bag_sizes.items()},
        "yannakakis_produced": res.yannakakis_produced,
        "branches": res.branches,
        "ddrs": [r.to_dict(q.all_vars) for r in res.reports],
    }


def _report_text(report: dict) -> str:
    lines = [f"plan: {report['plan']} (used {report.get('plan_used', report['plan'])})",
             f"output size: {report['output_size']}"]
    if report.get("base_N") is not None:
        lines.append(f"N: {report['base_N']}")
    for b, n in report.get("bag_sizes", {}).items():
        lines.append(f"bag {b}: {n} tuples")
    for i, d in enumerate(report.get("ddrs", [])):
        outs = ", ".join(f"{k}={v}" for k, v in d["outputs"].items())
        lines.append(f"ddr {i}: B = {d['B']} (ceil {d['ceil_B']}), outputs {outs}, "
                     f"max intermediate {d['max_intermediate']}, branches {d['branches']}")
    return "\n".join(lines) + "\n"


def cmd_verify(args) -> int:
    q = _load_query(args.query)
    db = load_database(args.data, q)
    s = _load_stats(args.stats, q) if args.stats else infer_stats(db, q, 1)
    reference = brute_join(q, db)
    base_n = resolve_base(s, db) if s.symbolic else None
    results = {}
    adaptive = evaluate_cq_adaptive(q, s, db, base_n)
    results["adaptive"] = compare(reference, adaptive.output)
    static = evaluate_cq_static(q, s, db, None, base_n)
    results["static"] = compare(reference, static.output)
    lines = [f"oracle: {len(reference)} tuples"]
    lines += [f"{plan}: {r.describe()}" for plan, r in results.items()]
    ok = all(r.match for r in results.values())
    _emit(args, {"oracle_size": len(reference), "match": ok,
                 "plans": {k: {"match": r.match, "missing": len(r.missing), "extra": len(r.extra)}
                           for k, r in results.items()}}, "\n".join(lines))
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_stats(args) -> int:
    q = _load_query(args.query)
    db = load_database(args.data, q)
    if not db.relations:
        raise DataError("no relations loaded")
    s = infer_stats(db, q, args.max_cond)
    sys.stdout.write(render_stats(s))
    return EXIT_OK


# --------------------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cqopt", description="Information-theoretic bounds and plans for conjunctive queries")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized tooling")
    p.add_argument("--threads", type=int, default=1, help="worker cap for selector LPs")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, stats=True):
        sp.add_argument("query")
        if stats:
            sp.add_argument("stats")
        sp.add_argument("--json", action="store_true")

    b = sub.add_parser("bound", help="polymatroid bound of a variable set")
    common(b)
    b.add_argument("--target", default="head", help="'head' or a comma-separated variable list")
    b.set_defaults(func=cmd_bound)

    w = sub.add_parser("width", help="fractional hypertree or submodular width")
    common(w)
    w.add_argument("--measure", choices=("fhtw", "subw"), default="subw")
    w.set_defaults(func=cmd_width)

    pr = sub.add_parser("prove", help="Shannon-flow inequality and proof sequence for a bag selector")
    common(pr)
    pr.add_argument("--selector", type=int, default=0)
    pr.add_argument("--drop", help="also apply Reset to this unconditional source, e.g. XY")
    pr.set_defaults(func=cmd_prove)

    r = sub.add_parser("run", help="evaluate the query on data")
    common(r)
    r.add_argument("data")
    r.add_argument("--plan", choices=("static", "adaptive", "oracle"), default="adaptive")
    r.add_argument("--td", default="best", help="decomposition index for the static plan, or 'best'")
    r.add_argument("--output", "-o")
    r.add_argument("--report")
    r.add_argument("--no-validate", action="store_true")
    r.add_argument("--base-n", type=int, help="value of N for symbolic statistics (default: smallest consistent)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="compare both plans with the brute-force oracle")
    common(v, stats=False)
    v.add_argument("data")
    v.add_argument("--stats")
    v.set_defaults(func=cmd_verify)

    st = sub.add_parser("stats", help="infer tight numeric statistics from data")
    st.add_argument("query")
    st.add_argument("data")
    st.add_argument("--max-cond", type=int, default=1)
    st.set_defaults(func=cmd_stats)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    random.seed(args.seed)
    try:
        return args.func(args)
    except CliExit as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (QuerySyntaxError, SemanticError, SchemaError, DataError, ModeError, ArgumentError, PlanError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except UnboundedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNBOUNDED
    except GuardExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GUARD
    except CqoptError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
