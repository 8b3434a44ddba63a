"""Power-penalty relaxation of quadratic constraints.

Each remaining quadratic constraint ``g_i(x) <= 0`` is dropped from the
constraint set and ``w_i * max(g_i(x), 0)^p`` is added to the objective,
for an exponent ``p > 1``.  Linear constraints are not penalized; they
are handled by the linear minimization oracle.
"""

from __future__ import annotations

import numpy as np

from .model import Problem, QuadConstraint, assemble_symmetric


def penalty_value(g: float, p: float) -> float:
    """max(g, 0)^p for a real exponent p > 1."""
    if p <= 1.0:
        raise ValueError("penalty exponent must exceed 1")
    return max(g, 0.0) ** p


class SmoothObjective:
    """Value/gradient oracle pair for the penalty-relaxed objective.

    Owns dense matrix forms of the objective and the penalized
    constraints; read-only after construction, one instance per worker.
    """

    def __init__(
        self,
        problem: Problem,
        p: float = 1.5,
        weight_mode: str = "uniform",
    ):
        if p <= 1.0:
            raise ValueError("penalty exponent must exceed 1")
        self.problem = problem
        self.p = p
        n = problem.n
        self.q_mat = assemble_symmetric(n, problem.terms_obj)
        self.d = problem.d.astype(float)
        self.c0 = problem.c0
        self.penalized: list[QuadConstraint] = [
            con for con in problem.constraints if con.terms
        ]
        self._cons = []
        weights = []
        for con in self.penalized:
            a_mat = assemble_symmetric(n, con.terms)
            b = con.b_dense(n)
            self._cons.append((a_mat, b, con.c))
            if weight_mode == "scaled":
                weights.append(1.0 / max(1.0, con.max_abs_coef()))
            elif weight_mode == "uniform":
                weights.append(1.0)
            else:
                raise ValueError(f"unknown weight mode '{weight_mode}'")
        self.weights = np.array(weights) if weights else np.zeros(0)
        self.n_value_evals = 0
        self.n_gradient_evals = 0

    # -- oracles -----------------------------------------------------------

    def base_value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.q_mat @ x + self.d @ x + self.c0)

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([float(0.5 * x @ a @ x + b @ x + c) for (a, b, c) in self._cons])

    def value(self, x: np.ndarray) -> float:
        self.n_value_evals += 1
        x = np.asarray(x, dtype=float)
        total = self.base_value(x)
        for w, (a, b, c) in zip(self.weights, self._cons):
            g = float(0.5 * x @ a @ x + b @ x + c)
            if g > 0.0:
                total += w * g**self.p
        return total

    def gradient(self, x: np.ndarray) -> np.ndarray:
        self.n_gradient_evals += 1
        x = np.asarray(x, dtype=float)
        grad = self.q_mat @ x + self.d
        for w, (a, b, c) in zip(self.weights, self._cons):
            g = float(0.5 * x @ a @ x + b @ x + c)
            if g > 0.0:
                grad = grad + (w * self.p * g ** (self.p - 1.0)) * (a @ x + b)
        return grad

    def value_and_gradient(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_value_evals += 1
        self.n_gradient_evals += 1
        x = np.asarray(x, dtype=float)
        val = self.base_value(x)
        grad = self.q_mat @ x + self.d
        for w, (a, b, c) in zip(self.weights, self._cons):
            g = float(0.5 * x @ a @ x + b @ x + c)
            if g > 0.0:
                val += w * g**self.p
                grad = grad + (w * self.p * g ** (self.p - 1.0)) * (a @ x + b)
        return val, grad


def relaxed_value_and_gradient(obj: SmoothObjective, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Penalty-relaxed objective value and gradient at ``x``."""
    return obj.value_and_gradient(x)
