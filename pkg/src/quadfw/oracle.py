"""Brute-force reference solver used by the test suite.

Enumerates the integer lattice (continuous variables on a uniform grid)
and minimizes the original objective subject to the original constraints.
Deliberately independent of the solver code paths it checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Problem, VarKind

MAX_ENUMERATION = 2**20
_CHUNK = 1 << 14


@dataclass
class OracleResult:
    value: float | None  # None means infeasible
    point: np.ndarray | None
    enumerated: int

    @property
    def feasible(self) -> bool:
        return self.value is not None


def _axes(problem: Problem, grid: int) -> list[np.ndarray]:
    axes = []
    for k in range(problem.n):
        lo, hi = problem.lb[k], problem.ub[k]
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("brute force needs finite bounds")
        if problem.integrality[k] is VarKind.CONTINUOUS:
            if lo == hi:
                axes.append(np.array([lo]))
            elif grid < 2:
                raise ValueError("continuous variables need a grid of at least 2 points")
            else:
                axes.append(np.linspace(lo, hi, grid))
        else:
            lo_i, hi_i = int(np.ceil(lo - 1e-9)), int(np.floor(hi + 1e-9))
            if lo_i > hi_i:
                return []
            axes.append(np.arange(lo_i, hi_i + 1, dtype=float))
    return axes


def brute_force(problem: Problem, grid: int = 0, tol: float = 1e-9) -> OracleResult:
    """Exact minimum over the enumerated lattice, or infeasible.

    ``grid`` is the number of grid points per continuous variable
    (including both bounds); it may be 0 only when every variable is
    integral.  Points are enumerated in lexicographic order and ties keep
    the first optimum found.
    """
    axes = _axes(problem, grid)
    if axes == []:
        return OracleResult(None, None, 0)
    sizes = [len(a) for a in axes]
    total = int(np.prod(sizes, dtype=np.int64))
    if total > MAX_ENUMERATION:
        raise ValueError(f"enumeration size {total} exceeds {MAX_ENUMERATION}")

    best_val = np.inf
    best_point = None
    shape = tuple(sizes)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        coords = np.unravel_index(idx, shape)
        X = np.column_stack([axes[k][coords[k]] for k in range(problem.n)])

        feasible = np.ones(len(X), dtype=bool)
        for ci, con in enumerate(problem.constraints):
            g = np.full(len(X), con.c)
            for (i, j, q) in con.terms:
                g += q * X[:, i] * X[:, j]
            for k, v in con.b.items():
                g += v * X[:, k]
            if con.sense.value == "EQ":
                feasible &= np.abs(g) <= tol
            else:
                feasible &= g <= tol
            if not feasible.any():
                break
        if not feasible.any():
            continue

        obj = np.full(len(X), problem.c0)
        for (i, j, q) in problem.terms_obj:
            obj += q * X[:, i] * X[:, j]
        obj += X @ problem.d
        obj = np.where(feasible, obj, np.inf)
        k = int(np.argmin(obj))
        if obj[k] < best_val:
            best_val = float(obj[k])
            best_point = X[k].copy()

    if best_point is None:
        return OracleResult(None, None, total)
    return OracleResult(best_val, best_point, total)
