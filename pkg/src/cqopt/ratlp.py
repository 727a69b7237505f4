"""Exact rational linear programming.

`solve` maximizes over exact Fractions. The reference engine is a two-phase tableau
simplex with Bland's rule. Larger programs first ask HiGHS (via scipy) for an optimal
vertex, then rebuild that vertex and its dual exactly and check optimality in rational
arithmetic; any failure of that check falls back to the exact simplex, so the result
is exact either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

SENSES = ("<=", "=", ">=")

# size (variables x constraints) above which the float-guided path is tried first
GUIDED_THRESHOLD = 600


@dataclass(frozen=True)
class Constraint:
    coeffs: Mapping[int, Fraction]
    sense: str
    rhs: Fraction

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"unknown constraint sense {self.sense!r}")

    def lhs(self, x: Sequence[Fraction]) -> Fraction:
        return sum((c * x[j] for j, c in self.coeffs.items()), Fraction(0))


@dataclass
class LinearProgram:
    """maximize objective . x subject to constraints; x_j >= 0 unless j is free."""

    n_vars: int
    objective: dict[int, Fraction] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    free: frozenset = frozenset()

    def add(self, coeffs: Mapping[int, object], sense: str, rhs) -> int:
        clean = {j: Fraction(c) for j, c in coeffs.items() if c != 0}
        for j in clean:
            if not 0 <= j < self.n_vars:
                raise IndexError(f"variable {j} out of range")
        self.constraints.append(Constraint(clean, sense, Fraction(rhs)))
        return len(self.constraints) - 1

    @staticmethod
    def dense(objective: Sequence, rows: Sequence[Sequence], senses: Sequence[str],
              rhs: Sequence, free: Iterable[int] = ()) -> "LinearProgram":
        lp = LinearProgram(len(objective), {j: Fraction(c) for j, c in enumerate(objective) if c != 0},
                           [], frozenset(free))
        for row, s, b in zip(rows, senses, rhs):
            lp.add({j: c for j, c in enumerate(row)}, s, b)
        return lp


@dataclass
class LpSolution:
    status: str
    value: Optional[Fraction] = None
    primal: Optional[list[Fraction]] = None
    dual: Optional[list[Fraction]] = None
    engine: str = "simplex"


class CertificateFailure(AssertionError):
    pass


def verify_optimal(lp: LinearProgram, sol: LpSolution) -> None:
    """Exact primal/dual feasibility, complementary slackness and strong duality."""
    x, y = sol.primal, sol.dual
    if len(x) != lp.n_vars or len(y) != len(lp.constraints):
        raise CertificateFailure("dimension mismatch")
    for j in range(lp.n_vars):
        if j not in lp.free and x[j] < 0:
            raise CertificateFailure(f"x[{j}] = {x[j]} negative")
    reduced = [Fraction(0)] * lp.n_vars
    for i, (con, yi) in enumerate(zip(lp.constraints, y)):
        act = con.lhs(x)
        if con.sense == "<=":
            ok_p, ok_d = act <= con.rhs, yi >= 0
        elif con.sense == ">=":
            ok_p, ok_d = act >= con.rhs, yi <= 0
        else:
            ok_p, ok_d = act == con.rhs, True
        if not ok_p:
            raise CertificateFailure(f"constraint {i} violated: {act} {con.sense} {con.rhs}")
        if not ok_d:
            raise CertificateFailure(f"dual {i} has wrong sign: {yi}")
        if yi != 0 and act != con.rhs:
            raise CertificateFailure(f"complementary slackness fails on constraint {i}")
        for j, c in con.coeffs.items():
            reduced[j] += c * yi
    for j in range(lp.n_vars):
        r = reduced[j] - lp.objective.get(j, 0)
        if j in lp.free:
            if r != 0:
                raise CertificateFailure(f"dual equality fails for free variable {j}")
        else:
            if r < 0:
                raise CertificateFailure(f"dual constraint {j} violated by {r}")
            if r != 0 and x[j] != 0:
                raise CertificateFailure(f"complementary slackness fails on variable {j}")
    primal_val = sum((c * x[j] for j, c in lp.objective.items()), Fraction(0))
    dual_val = sum((con.rhs * yi for con, yi in zip(lp.constraints, y)), Fraction(0))
    if primal_val != dual_val or primal_val != sol.value:
        raise CertificateFailure(f"duality gap: primal {primal_val}, dual {dual_val}, reported {sol.value}")


def solve(lp: LinearProgram, method: str = "auto") -> LpSolution:
    if method not in ("auto", "exact", "guided"):
        raise ValueError(f"unknown method {method!r}")
    size = lp.n_vars * max(1, len(lp.constraints))
    if method == "guided" or (method == "auto" and size > GUIDED_THRESHOLD):
        sol = _solve_guided(lp)
        if sol is not None:
            return sol
    sol = _simplex(lp)
    if sol.status == OPTIMAL:
        verify_optimal(lp, sol)
    return sol


# --------------------------------------------------------------------------- exact simplex


class _Tableau:
    def __init__(self, rows: list[dict], rhs: list[Fraction], basis: list[int], n_cols: int):
        self.rows = rows
        self.rhs = rhs
        self.basis = basis
        self.n_cols = n_cols
        self.d: dict[int, Fraction] = {}
        self.value = Fraction(0)

    def set_objective(self, cost: Mapping[int, Fraction]) -> None:
        d = {j: Fraction(c) for j, c in cost.items() if c != 0}
        value = Fraction(0)
        for i, b in enumerate(self.basis):
            cb = cost.get(b, 0)
            if cb:
                value += cb * self.rhs[i]
                for j, a in self.rows[i].items():
                    nv = d.get(j, 0) - cb * a
                    if nv:
                        d[j] = nv
                    else:
                        d.pop(j, None)
        self.d = d
        self.value = value

    def pivot(self, r: int, c: int) -> None:
        row = self.rows[r]
        piv = row[c]
        if piv != 1:
            inv = 1 / piv
            row = {j: a * inv for j, a in row.items()}
            self.rows[r] = row
            self.rhs[r] *= inv
        br = self.rhs[r]
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other.get(c)
            if not f:
                continue
            for j, a in row.items():
                nv = other.get(j, 0) - f * a
                if nv:
                    other[j] = nv
                else:
                    other.pop(j, None)
            self.rhs[i] -= f * br
        f = self.d.get(c)
        if f:
            for j, a in row.items():
                nv = self.d.get(j, 0) - f * a
                if nv:
                    self.d[j] = nv
                else:
                    self.d.pop(j, None)
            self.value += f * br
        self.basis[r] = c

    def run(self, allowed) -> str:
        while True:
            entering = min((j for j, v in self.d.items() if v > 0 and allowed(j)), default=None)
            if entering is None:
                return OPTIMAL
            best = None
            for i, row in enumerate(self.rows):
                a = row.get(entering)
                if a is not None and a > 0:
                    key = (self.rhs[i] / a, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return UNBOUNDED
            self.pivot(best[1], entering)


def _simplex(lp: LinearProgram) -> LpSolution:
    n = lp.n_vars
    free = sorted(lp.free)
    neg_col = {j: n + k for k, j in enumerate(free)}
    n_struct = n + len(free)
    m = len(lp.constraints)

    rows: list[dict] = []
    rhs: list[Fraction] = []
    signs: list[int] = []
    kinds: list[str] = []
    for con in lp.constraints:
        row: dict[int, Fraction] = {}
        for j, c in con.coeffs.items():
            row[j] = c
            if j in neg_col:
                row[neg_col[j]] = -c
        sense, b, sgn = con.sense, con.rhs, 1
        if b < 0:
            row = {j: -a for j, a in row.items()}
            b, sgn = -b, -1
            sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
        rows.append(row)
        rhs.append(b)
        signs.append(sgn)
        kinds.append(sense)

    # column layout: structural | slack/surplus per inequality row | artificial per row needing one
    col = n_struct
    ident_col = [0] * m
    basis = [0] * m
    artificial = set()
    for i in range(m):
        if kinds[i] == "<=":
            rows[i][col] = Fraction(1)
            ident_col[i] = basis[i] = col
            col += 1
        elif kinds[i] == ">=":
            rows[i][col] = Fraction(-1)
            col += 1
    for i in range(m):
        if kinds[i] != "<=":
            rows[i][col] = Fraction(1)
            ident_col[i] = basis[i] = col
            artificial.add(col)
            col += 1
    tab = _Tableau(rows, rhs, basis, col)

    if artificial:
        tab.set_objective({a: Fraction(-1) for a in artificial})
        tab.run(lambda j: True)
        if tab.value < 0:
            return LpSolution(INFEASIBLE)
        for i in range(m):
            if tab.basis[i] in artificial:
                swap = min((j for j, a in tab.rows[i].items() if j not in artificial and a != 0), default=None)
                if swap is not None:
                    tab.pivot(i, swap)

    cost = dict(lp.objective)
    for j, c in lp.objective.items():
        if j in neg_col:
            cost[neg_col[j]] = -c
    tab.set_objective(cost)
    status = tab.run(lambda j: j not in artificial)
    if status != OPTIMAL:
        return LpSolution(status)

    xs = [Fraction(0)] * n_struct
    for i, b in enumerate(tab.basis):
        if b < n_struct:
            xs[b] = tab.rhs[i]
    primal = [xs[j] - (xs[neg_col[j]] if j in neg_col else 0) for j in range(n)]
    dual = [-tab.d.get(ident_col[i], Fraction(0)) * signs[i] for i in range(m)]
    return LpSolution(OPTIMAL, tab.value, primal, dual, "simplex")


# --------------------------------------------------------------------------- float-guided path


def _solve_guided(lp: LinearProgram) -> Optional[LpSolution]:
    try:
        import numpy as np
        from scipy.optimize import linprog
    except ImportError:  # pragma: no cover - scipy is a declared dependency
        return None
    n, m = lp.n_vars, len(lp.constraints)
    ub_idx = [i for i, c in enumerate(lp.constraints) if c.sense != "="]
    eq_idx = [i for i, c in enumerate(lp.constraints) if c.sense == "="]
    c_vec = np.zeros(n)
    for j, v in lp.objective.items():
        c_vec[j] = -float(v)

    def dense(idx, flip):
        A = np.zeros((len(idx), n))
        b = np.zeros(len(idx))
        for r, i in enumerate(idx):
            con = lp.constraints[i]
            s = -1.0 if flip and con.sense == ">=" else 1.0
            for j, v in con.coeffs.items():
                A[r, j] = s * float(v)
            b[r] = s * float(con.rhs)
        return A, b

    A_ub, b_ub = dense(ub_idx, True)
    A_eq, b_eq = dense(eq_idx, False)
    bounds = [(None, None) if j in lp.free else (0, None) for j in range(n)]
    try:
        res = linprog(c_vec, A_ub=A_ub if ub_idx else None, b_ub=b_ub if ub_idx else None,
                      A_eq=A_eq if eq_idx else None, b_eq=b_eq if eq_idx else None,
                      bounds=bounds, method="highs")
    except ValueError:
        return None
    if res.status != 0:
        return None

    y = [Fraction(0)] * m
    for r, i in enumerate(ub_idx):
        v = -float(res.ineqlin.marginals[r])
        if lp.constraints[i].sense == ">=":
            v = -v
        y[i] = _rationalize(v)
    for r, i in enumerate(eq_idx):
        y[i] = _rationalize(-float(res.eqlin.marginals[r]))

    # dual feasibility, exactly
    reduced = [-lp.objective.get(j, Fraction(0)) for j in range(n)]
    for con, yi in zip(lp.constraints, y):
        if yi:
            for j, c in con.coeffs.items():
                reduced[j] += c * yi
    for i, con in enumerate(lp.constraints):
        if (con.sense == "<=" and y[i] < 0) or (con.sense == ">=" and y[i] > 0):
            return None
    for j in range(n):
        if (j in lp.free and reduced[j] != 0) or (j not in lp.free and reduced[j] < 0):
            return None

    # rebuild the primal vertex from the active set
    xf = res.x
    mandatory: list[tuple[dict, Fraction]] = []
    optional: list[tuple[dict, Fraction]] = []
    for i, con in enumerate(lp.constraints):
        act = sum(float(c) * xf[j] for j, c in con.coeffs.items())
        scale = 1.0 + abs(float(con.rhs))
        eq = (dict(con.coeffs), con.rhs)
        if y[i] != 0 or con.sense == "=":
            mandatory.append(eq)
        elif abs(act - float(con.rhs)) <= 1e-7 * scale:
            optional.append(eq)
    for j in range(n):
        if j in lp.free:
            continue
        eq = ({j: Fraction(1)}, Fraction(0))
        if reduced[j] != 0:
            mandatory.append(eq)
        elif abs(xf[j]) <= 1e-9:
            optional.append(eq)
    x = _solve_system(n, mandatory, optional)
    if x is None:
        return None
    value = sum((c * x[j] for j, c in lp.objective.items()), Fraction(0))
    sol = LpSolution(OPTIMAL, value, x, y, "guided")
    try:
        verify_optimal(lp, sol)
    except CertificateFailure:
        return None
    return sol


def _rationalize(v: float) -> Fraction:
    if abs(v) < 1e-10:
        return Fraction(0)
    return Fraction(v).limit_denominator(1 << 20)


def _solve_system(n: int, mandatory, optional) -> Optional[list[Fraction]]:
    """Pick n independent equations (mandatory first) and solve them exactly."""
    pivots: list[tuple[int, dict, Fraction]] = []  # (pivot column, row, rhs) in echelon form
    for is_mandatory, eqs in ((True, mandatory), (False, optional)):
        for coeffs, b in eqs:
            if len(pivots) == n and not is_mandatory:
                break
            row = dict(coeffs)
            rhs = b
            for pc, prow, prhs in pivots:
                f = row.get(pc)
                if f:
                    for j, a in prow.items():
                        nv = row.get(j, 0) - f * a
                        if nv:
                            row[j] = nv
                        else:
                            row.pop(j, None)
                    rhs -= f * prhs
            if not row:
                if rhs != 0 and is_mandatory:
                    return None
                continue
            pc = min(row)
            inv = 1 / row[pc]
            row = {j: a * inv for j, a in row.items()}
            rhs *= inv
            # keep earlier rows reduced against the new pivot (full Gauss-Jordan)
            new_pivots = []
            for qc, qrow, qrhs in pivots:
                f = qrow.get(pc)
                if f:
                    qrow = dict(qrow)
                    for j, a in row.items():
                        nv = qrow.get(j, 0) - f * a
                        if nv:
                            qrow[j] = nv
                        else:
                            qrow.pop(j, None)
                    qrhs -= f * rhs
                new_pivots.append((qc, qrow, qrhs))
            pivots = new_pivots + [(pc, row, rhs)]
    if len(pivots) < n:
        return None
    x = [Fraction(0)] * n
    for pc, row, rhs in pivots:
        if len(row) != 1:
            return None
        x[pc] = rhs
    return x
