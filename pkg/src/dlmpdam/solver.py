"""Narrow linear/mixed-integer model interface backed by HiGHS via scipy.

The market and PEP code only use: add continuous/binary variables, add
linear rows with ``<=``, ``==`` or ``>=`` sense, a linear objective,
solve to optimality, read primal values, fix variable bounds, and (for
continuous problems) read row duals.  Any engine that offers these can
replace this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .errors import SolverError, SolverTimeout

INF = np.inf


@dataclass
class Solution:
    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray | None = None  # d objective / d rhs, one per row
    mip_gap: float | None = None

    def __getitem__(self, idx):
        return self.x[idx]


@dataclass
class LinearModel:
    """Accumulates columns and sparse rows; rows are stored as ``lo <= a.x <= hi``."""

    name: str = "model"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    integer: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    _rows: list = field(default_factory=list)
    _cols: list = field(default_factory=list)
    _vals: list = field(default_factory=list)
    row_lo: list = field(default_factory=list)
    row_hi: list = field(default_factory=list)
    row_sense: list = field(default_factory=list)
    row_groups: dict = field(default_factory=dict)
    var_groups: dict = field(default_factory=dict)
    objective_constant: float = 0.0

    @property
    def num_vars(self) -> int:
        return len(self.lb)

    @property
    def num_rows(self) -> int:
        return len(self.row_lo)

    def add_vars(self, name: str, shape, lb=0.0, ub=INF, binary: bool = False, cost=0.0) -> np.ndarray:
        """Add a block of variables; returns their column indices with ``shape``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        start = self.num_vars
        if binary:
            lb, ub = 0.0, 1.0
        self.lb.extend(np.broadcast_to(np.asarray(lb, float), shape).ravel())
        self.ub.extend(np.broadcast_to(np.asarray(ub, float), shape).ravel())
        self.integer.extend([1 if binary else 0] * count)
        self.cost.extend(np.broadcast_to(np.asarray(cost, float), shape).ravel())
        idx = np.arange(start, start + count).reshape(shape)
        self.var_groups[name] = idx
        return idx

    def add_rows(self, name: str, cols, coefs, sense: str, rhs) -> np.ndarray:
        """Add ``len(rhs)`` rows.

        ``cols``/``coefs`` are per-row sequences (ragged allowed) or 2-D arrays.
        """
        if sense not in ("<=", "==", ">="):
            raise ValueError(f"bad sense {sense!r}")
        rhs = np.atleast_1d(np.asarray(rhs, float))
        start = self.num_rows
        for k, (c, v) in enumerate(zip(cols, coefs)):
            c = np.asarray(c, dtype=int).ravel()
            v = np.broadcast_to(np.asarray(v, float), c.shape).ravel()
            keep = v != 0
            self._rows.append(np.full(int(keep.sum()), start + k))
            self._cols.append(c[keep])
            self._vals.append(v[keep])
        n_new = len(rhs)
        if sense == "<=":
            lo, hi = np.full(n_new, -INF), rhs
        elif sense == ">=":
            lo, hi = rhs, np.full(n_new, INF)
        else:
            lo, hi = rhs, rhs
        self.row_lo.extend(lo)
        self.row_hi.extend(hi)
        self.row_sense.extend([sense] * n_new)
        idx = np.arange(start, start + n_new)
        self.row_groups[name] = np.concatenate([self.row_groups[name], idx]) if name in self.row_groups else idx
        return idx

    def add_dense_rows(self, name: str, cols, matrix, sense: str, rhs) -> np.ndarray:
        """Rows ``matrix @ x[cols] (sense) rhs`` for a dense coefficient matrix."""
        matrix = np.atleast_2d(np.asarray(matrix, float))
        cols = np.asarray(cols, int).ravel()
        return self.add_rows(name, [cols] * matrix.shape[0], list(matrix), sense, rhs)

    def add_cost(self, cols, coefs) -> None:
        for c, v in zip(np.asarray(cols, int).ravel(), np.broadcast_to(np.asarray(coefs, float), np.shape(cols)).ravel()):
            self.cost[c] += v

    def fix(self, cols, values) -> None:
        for c, v in zip(np.asarray(cols, int).ravel(), np.asarray(values, float).ravel()):
            self.lb[c] = self.ub[c] = float(v)
            self.integer[c] = 0

    def shift_rhs(self, rows, delta: float) -> None:
        """Move both finite sides of the given rows by ``delta``."""
        for r in np.atleast_1d(np.asarray(rows, int)):
            self.row_lo[r] += delta
            self.row_hi[r] += delta

    def matrix(self) -> sp.csr_matrix:
        if self._rows:
            r, c, v = (np.concatenate(a) for a in (self._rows, self._cols, self._vals))
        else:
            r = c = np.zeros(0, int)
            v = np.zeros(0)
        return sp.csr_matrix((v, (r, c)), shape=(self.num_rows, self.num_vars))

    def copy(self) -> "LinearModel":
        new = LinearModel(name=self.name)
        for attr in ("lb", "ub", "integer", "cost", "_rows", "_cols", "_vals", "row_lo", "row_hi", "row_sense"):
            setattr(new, attr, list(getattr(self, attr)))
        new.row_groups = dict(self.row_groups)
        new.var_groups = dict(self.var_groups)
        new.objective_constant = self.objective_constant
        return new

    # -- solving -----------------------------------------------------------

    def solve_milp(self, time_limit: float | None = None, mip_rel_gap: float = 1e-6) -> Solution:
        A = self.matrix()
        options = {"mip_rel_gap": mip_rel_gap, "presolve": True}
        if time_limit is not None:
            options["time_limit"] = time_limit
        cons = [LinearConstraint(A, np.array(self.row_lo), np.array(self.row_hi))] if self.num_rows else []
        res = milp(
            c=np.array(self.cost),
            integrality=np.array(self.integer),
            bounds=Bounds(np.array(self.lb), np.array(self.ub)),
            constraints=cons,
            options=options,
        )
        if res.status == 1:
            incumbent = None if res.x is None else Solution("time_limit", res.fun + self.objective_constant, res.x)
            raise SolverTimeout(f"{self.name}: time limit reached", incumbent=incumbent)
        if res.status != 0 or res.x is None:
            raise SolverError(f"{self.name}: MILP solve failed ({res.status}): {res.message}")
        return Solution(
            status="optimal",
            objective=float(res.fun) + self.objective_constant,
            x=np.asarray(res.x),
            mip_gap=getattr(res, "mip_gap", None),
        )

    def solve_lp(self) -> Solution:
        """Solve with integrality dropped and return row duals (d obj / d rhs)."""
        A = self.matrix().tocsr()
        lo, hi = np.array(self.row_lo), np.array(self.row_hi)
        eq = lo == hi
        ub_rows = np.flatnonzero(~eq & np.isfinite(hi))
        lb_rows = np.flatnonzero(~eq & np.isfinite(lo))
        eq_rows = np.flatnonzero(eq)
        A_ub = sp.vstack([A[ub_rows], -A[lb_rows]]).tocsr()
        b_ub = np.concatenate([hi[ub_rows], -lo[lb_rows]])
        res = linprog(
            c=np.array(self.cost),
            A_ub=A_ub if A_ub.shape[0] else None,
            b_ub=b_ub if A_ub.shape[0] else None,
            A_eq=A[eq_rows] if len(eq_rows) else None,
            b_eq=lo[eq_rows] if len(eq_rows) else None,
            bounds=list(zip(self.lb, self.ub)),
            method="highs-ds",
        )
        if res.status != 0:
            raise SolverError(f"{self.name}: LP solve failed ({res.status}): {res.message}")
        duals = np.zeros(self.num_rows)
        if len(eq_rows):
            duals[eq_rows] = res.eqlin.marginals
        if A_ub.shape[0]:
            m = res.ineqlin.marginals
            duals[ub_rows] += m[: len(ub_rows)]
            duals[lb_rows] -= m[len(ub_rows) :]
        return Solution(status="optimal", objective=float(res.fun) + self.objective_constant, x=np.asarray(res.x), duals=duals)
