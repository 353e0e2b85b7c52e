"""Exact two-phase revised simplex over the rationals.

Solves ``min c.x  s.t.  A x = b, x >= 0`` where ``A`` is given column-wise as
sparse ``{row: value}`` maps.  Arithmetic uses gmpy2 ``mpq`` internally and
returns ``fractions.Fraction`` values.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from gmpy2 import mpq

ZERO = mpq(0)
ONE = mpq(1)
DEGENERATE_SWITCH = 1000


@dataclass
class StdResult:
    status: str  # optimal | infeasible | unbounded
    objective: Fraction | None
    x: list[Fraction] | None
    y: list[Fraction] | None
    iterations: int


def _frac(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


class _Tableau:
    def __init__(self, cols, b, m):
        self.m = m
        self.cols = cols
        self.binv = [[ONE if i == j else ZERO for j in range(m)] for i in range(m)]
        self.basis = []
        self.xb = [mpq(v) for v in b]

    def ftran(self, col):
        binv = self.binv
        out = [ZERO] * self.m
        for r, a in col.items():
            for i in range(self.m):
                e = binv[i][r]
                if e:
                    out[i] += e * a
        return out

    def duals(self, cb):
        m = self.m
        y = [ZERO] * m
        for i in range(m):
            c = cb[i]
            if c:
                row = self.binv[i]
                for r in range(m):
                    if row[r]:
                        y[r] += c * row[r]
        return y

    def pivot(self, leave_row, enter, u):
        binv, m = self.binv, self.m
        piv = u[leave_row]
        prow = [v / piv for v in binv[leave_row]]
        binv[leave_row] = prow
        t = self.xb[leave_row] / piv
        for i in range(m):
            if i == leave_row:
                continue
            f = u[i]
            if f:
                row = binv[i]
                for r in range(m):
                    if prow[r]:
                        row[r] -= f * prow[r]
                self.xb[i] -= f * t
        self.xb[leave_row] = t
        self.basis[leave_row] = enter


def _exact_reduced(tab: _Tableau, cost, y, j):
    d = cost[j]
    for r, a in tab.cols[j].items():
        yr = y[r]
        if yr:
            d -= yr * a
    return d


def _ratio_test(tab: _Tableau, u):
    """Minimum ratio row; ties broken lexicographically on the rows of B^-1 / u_i."""
    best, rows = None, []
    for i in range(tab.m):
        if u[i] > 0:
            ratio = tab.xb[i] / u[i]
            if best is None or ratio < best:
                best, rows = ratio, [i]
            elif ratio == best:
                rows.append(i)
    if not rows:
        return None, None
    if len(rows) > 1:
        for r in range(tab.m):
            vals = [tab.binv[i][r] / u[i] for i in rows]
            low = min(vals)
            rows = [i for i, v in zip(rows, vals) if v == low]
            if len(rows) == 1:
                break
    return rows[0], best


def _run_phase(tab: _Tableau, cost, allowed, max_iter, it0, dense):
    """Iterate until optimal or unbounded.  Returns (status, iterations).

    Entering columns are priced with Dantzig's rule on a float copy of the
    reduced costs and confirmed exactly.  The leaving row comes from a
    lexicographic ratio test; as a safety net, after ``DEGENERATE_SWITCH``
    consecutive degenerate pivots Bland's rule takes over until the
    objective moves again.
    """
    it = it0
    in_basis = set(tab.basis)
    allowed = list(allowed)
    cost_f = np.array([float(cost[j]) for j in allowed])
    stall = 0
    while True:
        if it >= max_iter:
            raise RuntimeError(f"simplex iteration guard {max_iter} reached")
        cb = [cost[j] for j in tab.basis]
        y = tab.duals(cb)
        enter = None
        if stall < DEGENERATE_SWITCH:
            yf = np.array([float(v) for v in y])
            red = cost_f - dense.T @ yf
            for j in tab.basis:
                if j < len(red):
                    red[j] = 0.0
            order = np.argsort(red, kind="stable")
            for pos in order[:8]:
                if red[pos] >= -1e-12:
                    break
                j = allowed[pos]
                if _exact_reduced(tab, cost, y, j) < 0:
                    enter = j
                    break
        if enter is None:
            for j in allowed:
                if j not in in_basis and _exact_reduced(tab, cost, y, j) < 0:
                    enter = j
                    break
        if enter is None:
            return "optimal", it
        u = tab.ftran(tab.cols[enter])
        leave, best = _ratio_test(tab, u)
        if leave is None:
            return "unbounded", it
        stall = stall + 1 if best == 0 else 0
        in_basis.discard(tab.basis[leave])
        in_basis.add(enter)
        tab.pivot(leave, enter, u)
        it += 1


def solve_standard(cols, b, c, max_iter: int = 1_000_000) -> StdResult:
    """Minimise c.x subject to A x = b, x >= 0 (A given as sparse columns)."""
    m = len(b)
    nstruct = len(cols)
    sign = [(-1 if Fraction(v) < 0 else 1) for v in b]
    scols = []
    for col in cols:
        scols.append({r: mpq(sign[r] * Fraction(a)) for r, a in col.items() if a != 0})
    art = [{r: ONE} for r in range(m)]
    allcols = scols + art
    bb = [mpq(abs(Fraction(v))) for v in b]
    tab = _Tableau(allcols, bb, m)
    tab.basis = list(range(nstruct, nstruct + m))

    dense = np.zeros((m, nstruct))
    for j, col in enumerate(scols):
        for r, a in col.items():
            dense[r, j] = float(a)

    # phase 1
    cost1 = [ZERO] * nstruct + [ONE] * m
    status, it = _run_phase(tab, cost1, range(nstruct), max_iter, 0, dense)
    assert status == "optimal"
    if sum(tab.xb[i] for i in range(m) if tab.basis[i] >= nstruct) > 0:
        return StdResult("infeasible", None, None, None, it)
    # drive zero-level artificials out where possible
    for i in range(m):
        if tab.basis[i] < nstruct:
            continue
        in_basis = set(tab.basis)
        row = tab.binv[i]
        for j in range(nstruct):
            if j in in_basis:
                continue
            val = sum((row[r] * a for r, a in scols[j].items()), ZERO)
            if val != 0:
                tab.pivot(i, j, tab.ftran(scols[j]))
                it += 1
                break

    # phase 2
    cost2 = [mpq(Fraction(v)) for v in c] + [ZERO] * m
    status, it = _run_phase(tab, cost2, range(nstruct), max_iter, it, dense)
    if status == "unbounded":
        return StdResult("unbounded", None, None, None, it)
    x = [ZERO] * nstruct
    for i, j in enumerate(tab.basis):
        if j < nstruct:
            x[j] = tab.xb[i]
    y = tab.duals([cost2[j] for j in tab.basis])
    y = [v * sign[r] for r, v in enumerate(y)]
    obj = sum((cost2[j] * x[j] for j in range(nstruct) if x[j]), ZERO)
    return StdResult("optimal", _frac(obj), [_frac(v) for v in x], [_frac(v) for v in y], it)
