"""Shared random-instance generators for the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from quadfw.model import Problem, QuadConstraint, VarKind


def dense_terms(rng: np.random.Generator, n: int, scale: float = 1.0):
    """Term list of a dense symmetric quadratic (term convention)."""
    q_mat = rng.normal(scale=scale, size=(n, n))
    q_mat = 0.5 * (q_mat + q_mat.T)
    terms = [(i, i, q_mat[i, i] / 2.0) for i in range(n)]
    terms += [(i, j, q_mat[i, j]) for i in range(n) for j in range(i + 1, n)]
    return [(i, j, q) for (i, j, q) in terms if q != 0.0]


def random_binary_qp(rng: np.random.Generator, n: int) -> Problem:
    return Problem(
        n=n,
        terms_obj=dense_terms(rng, n),
        d=rng.normal(size=n),
        c0=float(rng.normal()),
        constraints=[],
        lb=np.zeros(n),
        ub=np.ones(n),
        integrality=[VarKind.BINARY] * n,
        name=f"binqp{n}",
    )


def random_integer_box(rng: np.random.Generator, n: int, span: int = 3) -> tuple[np.ndarray, np.ndarray]:
    lb = rng.integers(-1, 2, size=n).astype(float)
    ub = lb + rng.integers(1, span + 1, size=n).astype(float)
    return lb, ub


def sparse_quad_constraint(
    rng: np.random.Generator, n: int, anchor: np.ndarray | None = None
) -> QuadConstraint:
    """Random quadratic LE constraint; when an anchor point is given the
    constant is shifted so the anchor is strictly feasible."""
    n_terms = int(rng.integers(1, 4))
    terms = []
    for _ in range(n_terms):
        i, j = sorted(rng.integers(0, n, size=2))
        terms.append((int(i), int(j), float(rng.normal())))
    b = {int(k): float(rng.normal()) for k in rng.choice(n, size=min(2, n), replace=False)}
    c = float(rng.normal())
    con = QuadConstraint(terms, b, c)
    if anchor is not None:
        g = sum(q * anchor[i] * anchor[j] for (i, j, q) in terms)
        g += sum(v * anchor[k] for k, v in b.items()) + c
        slack = float(rng.uniform(0.1, 1.0))
        con = QuadConstraint(terms, b, c - g - slack)
    return con


def random_miqcqp(
    rng: np.random.Generator,
    n: int,
    n_quad: int,
    n_lin: int = 0,
    anchored: bool = True,
) -> Problem:
    """Random all-integer MIQCQP; anchored instances are guaranteed feasible."""
    lb, ub = random_integer_box(rng, n)
    anchor = None
    if anchored:
        anchor = np.array([float(rng.integers(lb[k], ub[k] + 1)) for k in range(n)])
    cons = [sparse_quad_constraint(rng, n, anchor) for _ in range(n_quad)]
    for _ in range(n_lin):
        a = {int(k): float(rng.normal()) for k in rng.choice(n, size=min(3, n), replace=False)}
        c = float(rng.normal())
        if anchor is not None:
            g = sum(v * anchor[k] for k, v in a.items()) + c
            c = c - g - float(rng.uniform(0.1, 1.0))
        cons.append(QuadConstraint([], a, c))
    return Problem(
        n=n,
        terms_obj=dense_terms(rng, n, scale=0.7),
        d=rng.normal(size=n),
        c0=0.0,
        constraints=cons,
        lb=lb,
        ub=ub,
        integrality=[VarKind.INTEGER] * n,
        name=f"miqcqp{n}",
    )


def enumerate_lattice(problem: Problem):
    """All integer lattice points of an all-integer problem's box."""
    axes = []
    for k in range(problem.n):
        axes.append(np.arange(int(np.ceil(problem.lb[k])), int(np.floor(problem.ub[k])) + 1))
    for point in itertools.product(*axes):
        yield np.array(point, dtype=float)
