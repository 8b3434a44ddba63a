"""Blended Pairwise Conditional Gradient (BPCG) over a linear
minimization oracle.

Each step compares the local pairwise gap across the active set against
the current global gap estimate: large local gaps take a pairwise step
(transporting weight from the away vertex to the local FW vertex),
otherwise a vertex is obtained lazily from the cache or a fresh MIP
call and a global FW step is taken.  The step size comes from a secant
search on the directional derivative with a halving safeguard, so the
objective never increases even on nonconvex relaxations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .lmo import Region, VertexCache, lazy_lookup, mip_lmo
from .penalty import SmoothObjective

WEIGHT_TOL = 1e-12


class RegionInfeasible(RuntimeError):
    """The LMO reports an empty feasible region."""


class ActiveSet:
    """Vertices and convex weights representing the current FW iterate."""

    def __init__(self, vertices: list[np.ndarray] | None = None,
                 weights: list[float] | None = None):
        self.vertices: list[np.ndarray] = [np.asarray(v, dtype=float).copy()
                                           for v in (vertices or [])]
        self.weights: list[float] = list(weights or [])
        if len(self.vertices) != len(self.weights):
            raise ValueError("vertex/weight length mismatch")
        self._keys = {self._key(v): i for i, v in enumerate(self.vertices)}
        if len(self._keys) != len(self.vertices):
            raise ValueError("duplicate vertices in active set")
        self._x: np.ndarray | None = None

    @staticmethod
    def _key(v: np.ndarray) -> bytes:
        return np.round(np.asarray(v, dtype=float), 9).tobytes()

    @classmethod
    def from_vertex(cls, v: np.ndarray) -> "ActiveSet":
        return cls([v], [1.0])

    def __len__(self) -> int:
        return len(self.vertices)

    def copy(self) -> "ActiveSet":
        return ActiveSet(self.vertices, self.weights)

    def iterate(self) -> np.ndarray:
        if self._x is None:
            self._x = sum(w * v for w, v in zip(self.weights, self.vertices))
        return self._x

    def find(self, v: np.ndarray) -> int | None:
        return self._keys.get(self._key(v))

    def _rebuild_index(self) -> None:
        self._keys = {self._key(v): i for i, v in enumerate(self.vertices)}

    def _drop_zero_weights(self) -> list[np.ndarray]:
        dropped = []
        keep = [i for i, w in enumerate(self.weights) if w > WEIGHT_TOL]
        if len(keep) != len(self.weights):
            dropped = [self.vertices[i] for i, w in enumerate(self.weights)
                       if w <= WEIGHT_TOL]
            self.vertices = [self.vertices[i] for i in keep]
            self.weights = [self.weights[i] for i in keep]
            self._rebuild_index()
        return dropped

    def renormalize(self) -> None:
        total = sum(self.weights)
        if total <= 0:
            raise ValueError("active set weights sum to zero")
        self.weights = [w / total for w in self.weights]
        self._x = None

    def fw_step(self, v: np.ndarray, gamma: float) -> list[np.ndarray]:
        """Blend toward vertex v with step gamma; returns dropped vertices."""
        self.weights = [w * (1.0 - gamma) for w in self.weights]
        idx = self.find(v)
        if idx is None:
            self.vertices.append(np.asarray(v, dtype=float).copy())
            self.weights.append(gamma)
            self._keys[self._key(v)] = len(self.vertices) - 1
        else:
            self.weights[idx] += gamma
        dropped = self._drop_zero_weights()
        self._x = None
        return dropped

    def pairwise_step(self, away_idx: int, local_idx: int, gamma: float) -> list[np.ndarray]:
        """Move weight gamma from the away vertex onto the local vertex."""
        self.weights[away_idx] -= gamma
        self.weights[local_idx] += gamma
        dropped = self._drop_zero_weights()
        self._x = None
        return dropped

    def extremes(self, gradient: np.ndarray) -> tuple[int, int]:
        """Indices of the away vertex (max inner product with the gradient)
        and the local vertex (min)."""
        scores = [float(gradient @ v) for v in self.vertices]
        away = max(range(len(scores)), key=lambda i: scores[i])
        local = min(range(len(scores)), key=lambda i: scores[i])
        return away, local

    def validate(self, tol: float = 1e-9) -> None:
        assert all(w >= -tol for w in self.weights)
        assert abs(sum(self.weights) - 1.0) <= tol
        x = sum(w * v for w, v in zip(self.weights, self.vertices))
        if self._x is not None:
            assert float(np.max(np.abs(x - self._x))) <= tol


@dataclass
class FwResult:
    x: np.ndarray
    active_set: ActiveSet
    dual_gap: float
    iterations: int
    vertices: list[np.ndarray]  # trusted vertices discovered via the LMO
    dropped: list[np.ndarray]
    objective_trace: list[float]
    lmo_calls: int = 0
    status: str = "ok"


def secant_step(phi_prime, gamma_max: float, max_iter: int = 40,
                tol: float = 1e-10, interval_tol: float = 1e-12) -> float:
    """Approximate root of the directional derivative on [0, gamma_max].

    Secant iterations start from the interval endpoints; the result is
    clamped to [0, gamma_max].  A nonnegative derivative at 0 yields 0,
    a nonpositive derivative at gamma_max yields gamma_max.
    """
    if gamma_max <= 0:
        return 0.0
    g0, g1 = 0.0, gamma_max
    f0 = phi_prime(g0)
    if f0 >= 0.0:
        return 0.0
    f1 = phi_prime(g1)
    if f1 <= 0.0:
        return gamma_max
    for _ in range(max_iter):
        if abs(f1) <= tol or abs(g1 - g0) < interval_tol:
            break
        denom = f1 - f0
        if denom == 0.0:
            break
        g2 = g1 - f1 * (g1 - g0) / denom
        g2 = min(max(g2, 0.0), gamma_max)
        g0, f0 = g1, f1
        g1, f1 = g2, phi_prime(g2)
    return min(max(g1, 0.0), gamma_max)


def _safeguarded_gamma(objective: SmoothObjective, x: np.ndarray, d: np.ndarray,
                       gamma: float, f_x: float) -> float:
    """Halve gamma until the step does not increase the objective."""
    while gamma >= 1e-12:
        if objective.value(x + gamma * d) <= f_x:
            return gamma
        gamma *= 0.5
    return 0.0


def _line_search(objective: SmoothObjective, x: np.ndarray, d: np.ndarray,
                 gamma_max: float, f_x: float) -> float:
    gamma = secant_step(lambda g: float(objective.gradient(x + g * d) @ d), gamma_max)
    if gamma <= 0.0:
        return 0.0
    return _safeguarded_gamma(objective, x, d, gamma, f_x)


def bpcg(
    objective: SmoothObjective,
    region: Region,
    warm: ActiveSet | None = None,
    max_iter: int = 10,
    eps: float = 1e-4,
    cache: VertexCache | None = None,
    deadline: float | None = None,
    init_direction: np.ndarray | None = None,
    lmo_time_budget: float = 1.0,
) -> FwResult:
    """Run BPCG until the dual gap falls below eps, the iteration budget
    is exhausted, or the deadline passes.

    Raises :class:`RegionInfeasible` when the LMO reports an empty
    region.  The global gap estimate is <grad, x - v> from the most
    recent true LMO call.
    """
    discovered: list[np.ndarray] = []
    dropped: list[np.ndarray] = []
    lmo_calls = 0

    def full_lmo(direction: np.ndarray):
        nonlocal lmo_calls
        lmo_calls += 1
        res = mip_lmo(direction, region, time_budget=lmo_time_budget, deadline=deadline)
        if res.status == "infeasible":
            raise RegionInfeasible("LMO region is infeasible")
        if res.point is None:
            raise RegionInfeasible("LMO failed to produce a vertex")
        if res.trusted:
            discovered.append(res.point)
            if cache is not None:
                cache.insert(res.point, region)
        return res.point, res.trusted

    active = warm.copy() if warm is not None and len(warm) else None
    if active is None:
        if init_direction is None:
            mid = 0.5 * (region.lb + region.ub)
            init_direction = objective.gradient(mid)
        v0, _ = full_lmo(init_direction)
        active = ActiveSet.from_vertex(v0)
    active.renormalize()
    x = active.iterate().copy()
    f_x = objective.value(x)
    trace = [f_x]

    grad = objective.gradient(x)
    v_fw, _ = full_lmo(grad)
    phi = float(grad @ (x - v_fw))
    status = "ok"
    iterations = 0

    for _ in range(max_iter):
        if phi <= eps:
            status = "converged"
            break
        if deadline is not None and time.monotonic() > deadline:
            status = "deadline"
            break
        iterations += 1
        grad = objective.gradient(x)
        away_idx, local_idx = active.extremes(grad)
        a = active.vertices[away_idx]
        s = active.vertices[local_idx]
        local_gap = float(grad @ (a - s))

        if local_gap >= phi and away_idx != local_idx:
            d = s - a
            gamma_max = active.weights[away_idx]
            gamma = _line_search(objective, x, d, gamma_max, f_x)
            if gamma > 0.0:
                dropped.extend(active.pairwise_step(away_idx, local_idx, gamma))
                x = x + gamma * d
                f_x = objective.value(x)
            else:
                # no local progress possible; force a fresh FW vertex next
                phi_stale = phi
                v, _ = full_lmo(grad)
                phi = float(grad @ (x - v))
                if phi <= eps:
                    trace.append(f_x)
                    status = "converged"
                    break
                gamma = _line_search(objective, x, v - x, 1.0, f_x)
                if gamma > 0.0:
                    dropped.extend(active.fw_step(v, gamma))
                    x = (1.0 - gamma) * x + gamma * v
                    f_x = objective.value(x)
                elif phi >= phi_stale:  # genuinely stuck
                    trace.append(f_x)
                    status = "stalled"
                    break
        else:
            v = None
            fresh = False
            if cache is not None:
                v = lazy_lookup(cache, grad, x, phi, region)
            if v is None:
                v, _ = full_lmo(grad)
                fresh = True
                phi = float(grad @ (x - v))
                if phi <= eps:
                    trace.append(f_x)
                    status = "converged"
                    break
            gamma = _line_search(objective, x, v - x, 1.0, f_x)
            if gamma > 0.0:
                dropped.extend(active.fw_step(v, gamma))
                x = (1.0 - gamma) * x + gamma * v
                f_x = objective.value(x)
            elif not fresh:
                # cached vertex gave no progress; pay for a true call once
                v, _ = full_lmo(grad)
                phi = float(grad @ (x - v))
                gamma = _line_search(objective, x, v - x, 1.0, f_x)
                if gamma > 0.0:
                    dropped.extend(active.fw_step(v, gamma))
                    x = (1.0 - gamma) * x + gamma * v
                    f_x = objective.value(x)
        # keep the cached iterate exact; weights drift slightly over steps
        active.renormalize()
        x = active.iterate().copy()
        trace.append(f_x)

    return FwResult(
        x=x,
        active_set=active,
        dual_gap=phi,
        iterations=iterations,
        vertices=discovered,
        dropped=dropped,
        objective_trace=trace,
        lmo_calls=lmo_calls,
        status=status,
    )
