"""In-memory representation of mixed-integer quadratically constrained
quadratic programs (MIQCQPs) and exact evaluation of objective and
constraints.

Term convention
---------------
Quadratic expressions are stored as sparse term lists ``(i, j, q)`` with
``i <= j``, where a term contributes ``q * x[i] * x[j]`` to the expression
value.  The objective value is::

    sum(q * x[i] * x[j] for (i, j, q) in terms_obj) + d @ x + c0

This equals the matrix form ``0.5 * x @ Q @ x + d @ x + c0`` with the
symmetric matrix ``Q`` defined by ``Q[i, j] = Q[j, i] = q`` for ``i < j``
and ``Q[i, i] = 2 * q``.  ``assemble_symmetric`` / ``terms_from_symmetric``
convert between the two representations.

All problems are minimized internally.  Instances declared as
maximization are negated at parse time (``sense_flag`` records the
original sense) and reported values are re-negated on output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

INFINITY = float("inf")

#: Default absolute feasibility tolerance for constraints and bounds.
DEFAULT_TOL_CONS = 1e-6
#: Default integrality tolerance.
DEFAULT_TOL_INT = 1e-6


class VarKind(enum.Enum):
    CONTINUOUS = "C"
    INTEGER = "I"
    BINARY = "B"


class Sense(enum.Enum):
    LE = "LE"
    GE = "GE"
    EQ = "EQ"


class ModelError(ValueError):
    """Raised on malformed model data (bad indices, dimension mismatch)."""


@dataclass
class QuadConstraint:
    """One normalized constraint ``sum(q*x_i*x_j) + b@x + c (<=|=) 0``.

    After normalization only LE constraints and recognized complementarity
    equalities (a single bilinear term, no linear part, zero constant) are
    stored; GE rows are negated and general EQ rows are split into LE
    pairs by :func:`normalize_constraint`.
    """

    terms: list[tuple[int, int, float]]
    b: dict[int, float]
    c: float
    sense: Sense = Sense.LE
    tag: str = "generic"  # generic | complementarity | perspective | indicator

    def is_linear(self) -> bool:
        return not self.terms

    def b_dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for k, v in self.b.items():
            out[k] = v
        return out

    def max_abs_coef(self) -> float:
        vals = [abs(q) for (_, _, q) in self.terms]
        vals.extend(abs(v) for v in self.b.values())
        vals.append(abs(self.c))
        return max(vals) if vals else 0.0


@dataclass
class FeasibilityReport:
    max_violation: float
    worst_constraint: int | None
    integral: bool
    in_bounds: bool
    feasible: bool


@dataclass
class Problem:
    """One MIQCQP in minimization form.

    Bounds may contain ``+-inf`` between parsing and presolve; presolve
    guarantees finite bounds before the solver runs.
    """

    n: int
    terms_obj: list[tuple[int, int, float]]
    d: np.ndarray
    c0: float
    constraints: list[QuadConstraint]
    lb: np.ndarray
    ub: np.ndarray
    integrality: list[VarKind]
    sense_flag: str = "MIN"  # original sense, MIN or MAX
    name: str = ""

    def __post_init__(self) -> None:
        self.d = np.asarray(self.d, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if len(self.d) != self.n or len(self.lb) != self.n or len(self.ub) != self.n:
            raise ModelError("objective/bound vectors do not match variable count")
        if len(self.integrality) != self.n:
            raise ModelError("integrality vector does not match variable count")
        for (i, j, q) in self.terms_obj:
            if not (0 <= i <= j < self.n):
                raise ModelError(f"objective term ({i},{j}) out of range")
            if q == 0.0:
                raise ModelError("zero-coefficient objective term")
        for k, kind in enumerate(self.integrality):
            if kind is VarKind.BINARY and not (self.lb[k] >= 0.0 and self.ub[k] <= 1.0):
                raise ModelError(f"binary variable {k} has bounds outside [0, 1]")
        for con in self.constraints:
            for (i, j, _) in con.terms:
                if not (0 <= i <= j < self.n):
                    raise ModelError(f"constraint term ({i},{j}) out of range")
            for k in con.b:
                if not (0 <= k < self.n):
                    raise ModelError(f"constraint linear index {k} out of range")

    # -- structure helpers -------------------------------------------------

    def integer_mask(self) -> np.ndarray:
        return np.array([k is not VarKind.CONTINUOUS for k in self.integrality])

    def integer_indices(self) -> list[int]:
        return [k for k, kind in enumerate(self.integrality) if kind is not VarKind.CONTINUOUS]

    def is_all_binary(self) -> bool:
        return all(k is VarKind.BINARY for k in self.integrality)

    def has_quadratic_constraints(self) -> bool:
        return any(con.terms for con in self.constraints)

    def linear_constraint_indices(self) -> list[int]:
        return [i for i, con in enumerate(self.constraints) if con.is_linear()]

    def bounds_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub)))

    def copy(self) -> "Problem":
        return replace(
            self,
            terms_obj=list(self.terms_obj),
            d=self.d.copy(),
            constraints=[
                QuadConstraint(list(c.terms), dict(c.b), c.c, c.sense, c.tag)
                for c in self.constraints
            ],
            lb=self.lb.copy(),
            ub=self.ub.copy(),
            integrality=list(self.integrality),
        )


# -- term-list / matrix conversions ---------------------------------------


def assemble_symmetric(n: int, terms: list[tuple[int, int, float]]) -> np.ndarray:
    """Dense symmetric Q with value(x) = 0.5 x'Qx for the given term list."""
    q_mat = np.zeros((n, n))
    for (i, j, q) in terms:
        if i == j:
            q_mat[i, i] += 2.0 * q
        else:
            q_mat[i, j] += q
            q_mat[j, i] += q
    return q_mat


def terms_from_symmetric(q_mat: np.ndarray) -> list[tuple[int, int, float]]:
    """Inverse of :func:`assemble_symmetric`; exact zeros are dropped."""
    n = q_mat.shape[0]
    terms = []
    for i in range(n):
        if q_mat[i, i] != 0.0:
            terms.append((i, i, q_mat[i, i] / 2.0))
        for j in range(i + 1, n):
            if q_mat[i, j] != 0.0:
                terms.append((i, j, q_mat[i, j]))
    return terms


def merge_terms(terms: list[tuple[int, int, float]]) -> list[tuple[int, int, float]]:
    """Canonicalize a raw term list: i <= j, duplicates merged, zeros dropped."""
    acc: dict[tuple[int, int], float] = {}
    for (i, j, q) in terms:
        key = (i, j) if i <= j else (j, i)
        acc[key] = acc.get(key, 0.0) + q
    return [(i, j, q) for (i, j), q in sorted(acc.items()) if q != 0.0]


# -- evaluation ------------------------------------------------------------


def eval_terms(terms: list[tuple[int, int, float]], x: np.ndarray) -> float:
    return float(sum(q * x[i] * x[j] for (i, j, q) in terms))


def eval_objective(problem: Problem, x: np.ndarray) -> float:
    """Objective value (minimization form) exactly as stored."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ModelError(f"point has dimension {x.shape}, expected ({problem.n},)")
    return eval_terms(problem.terms_obj, x) + float(problem.d @ x) + problem.c0


def eval_constraint(problem: Problem, idx: int, x: np.ndarray) -> float:
    """LHS value g(x) of constraint ``idx``; an LE row is feasible iff <= 0."""
    if not (0 <= idx < len(problem.constraints)):
        raise ModelError(f"constraint index {idx} out of range")
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ModelError(f"point has dimension {x.shape}, expected ({problem.n},)")
    con = problem.constraints[idx]
    val = eval_terms(con.terms, x) + con.c
    for k, v in con.b.items():
        val += v * x[k]
    return float(val)


def constraint_violation(con: QuadConstraint, g: float) -> float:
    """Violation of a normalized constraint given its LHS value."""
    if con.sense is Sense.EQ:
        return abs(g)
    return max(g, 0.0)


def check_feasibility(
    problem: Problem,
    x: np.ndarray,
    tol_cons: float = DEFAULT_TOL_CONS,
    tol_int: float = DEFAULT_TOL_INT,
) -> FeasibilityReport:
    """Feasibility of ``x`` against constraints, bounds and integrality.

    ``max_violation`` is the largest constraint violation or bound
    violation; ``feasible`` requires integrality within ``tol_int``,
    bounds within ``tol_cons`` and ``max_violation <= tol_cons``.
    """
    if tol_cons <= 0 or tol_int <= 0:
        raise ModelError("tolerances must be positive")
    x = np.asarray(x, dtype=float)
    integral = True
    for k in problem.integer_indices():
        if abs(x[k] - round(x[k])) > tol_int:
            integral = False
            break
    bound_viol = 0.0
    for k in range(problem.n):
        if math.isfinite(problem.lb[k]):
            bound_viol = max(bound_viol, problem.lb[k] - x[k])
        if math.isfinite(problem.ub[k]):
            bound_viol = max(bound_viol, x[k] - problem.ub[k])
    worst = None
    worst_viol = 0.0
    for idx, con in enumerate(problem.constraints):
        viol = constraint_violation(con, eval_constraint(problem, idx, x))
        if viol > worst_viol:
            worst_viol = viol
            worst = idx
    max_violation = max(worst_viol, bound_viol)
    in_bounds = bound_viol <= tol_cons
    feasible = integral and in_bounds and max_violation <= tol_cons
    return FeasibilityReport(
        max_violation=max_violation,
        worst_constraint=worst,
        integral=integral,
        in_bounds=in_bounds,
        feasible=feasible,
    )


# -- constraint normalization ----------------------------------------------


def is_complementarity_form(terms: list[tuple[int, int, float]], b: dict[int, float], c: float) -> bool:
    """Structural test for ``x_i * x_j = 0``: one bilinear term, nothing else."""
    return len(terms) == 1 and terms[0][0] != terms[0][1] and not b and c == 0.0


def normalize_constraint(
    terms: list[tuple[int, int, float]],
    b: dict[int, float],
    c: float,
    sense: Sense,
) -> list[QuadConstraint]:
    """Normalize a raw constraint to stored form.

    GE rows become negated LE rows.  EQ rows are split into an LE pair,
    except the complementarity form ``x_i * x_j = 0`` which is kept as a
    single EQ constraint for presolve to act on.
    """
    terms = merge_terms(terms)
    b = {k: v for k, v in b.items() if v != 0.0}
    if sense is Sense.LE:
        return [QuadConstraint(terms, b, c)]
    if sense is Sense.GE:
        neg_terms = [(i, j, -q) for (i, j, q) in terms]
        neg_b = {k: -v for k, v in b.items()}
        return [QuadConstraint(neg_terms, neg_b, -c)]
    if is_complementarity_form(terms, b, c):
        return [QuadConstraint(terms, b, c, sense=Sense.EQ)]
    neg_terms = [(i, j, -q) for (i, j, q) in terms]
    neg_b = {k: -v for k, v in b.items()}
    return [
        QuadConstraint(terms, dict(b), c),
        QuadConstraint(neg_terms, neg_b, -c),
    ]


def split_equality(con: QuadConstraint) -> list[QuadConstraint]:
    """Split a stored EQ constraint into its LE pair (used when presolve
    cannot reformulate a complementarity)."""
    if con.sense is not Sense.EQ:
        return [con]
    neg_terms = [(i, j, -q) for (i, j, q) in con.terms]
    neg_b = {k: -v for k, v in con.b.items()}
    return [
        QuadConstraint(list(con.terms), dict(con.b), con.c, tag=con.tag),
        QuadConstraint(neg_terms, neg_b, -con.c, tag=con.tag),
    ]
