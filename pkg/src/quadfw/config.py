"""Solver configuration (shared by the CLI, the portfolio and the tree
search).  A portfolio resolves the per-worker fields ``p``/``ell``/
``seed`` from the grids; a direct solve uses them as given."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

DEFAULT_P_GRID = (1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8)
DEFAULT_ELL_GRID = (0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass
class Config:
    time_limit: float = 300.0
    workers: int = 8
    p_grid: tuple[float, ...] = DEFAULT_P_GRID
    ell_grid: tuple[float, ...] = DEFAULT_ELL_GRID
    p: float = 1.5
    ell: float = 0.8  # best-performing convexification proportion
    fw_iter: int = 10
    fw_eps: float = 1e-4
    restart_interval: int = 100
    seed: int = 0
    node_limit: int | None = None
    reference: float | None = None
    enable_asens: bool = True
    enable_undercover: bool = True
    enable_rins: bool = True
    enable_ftg: bool = True
    enable_qubo_bipartite: bool = False  # outperformed by the other heuristics
    enable_lns: bool = True  # master switch, off inside recursive sub-solves
    penalty_weight_mode: str = "uniform"
    tol_cons: float = 1e-6
    tol_int: float = 1e-6
    lmo_time_budget: float = 1.0

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")
        if self.p <= 1.0 or any(p <= 1.0 for p in self.p_grid):
            raise ValueError("penalty exponents must exceed 1")
        if not (0.0 <= self.ell <= 1.0) or any(not 0.0 <= e <= 1.0 for e in self.ell_grid):
            raise ValueError("convexification proportions must lie in [0, 1]")
        if not (10 <= self.restart_interval <= 1000):
            raise ValueError("restart interval must lie in [10, 1000]")

    def for_worker(self, index: int, p: float | None = None,
                   ell: float | None = None) -> "Config":
        return replace(
            self,
            seed=self.seed + index,
            p=p if p is not None else self.p,
            ell=ell if ell is not None else self.ell,
        )

    def echo(self) -> dict:
        return {
            "time_limit": self.time_limit,
            "workers": self.workers,
            "p_grid": list(self.p_grid),
            "ell_grid": list(self.ell_grid),
            "fw_iter": self.fw_iter,
            "restart_interval": self.restart_interval,
            "seed": self.seed,
            "node_limit": self.node_limit,
            "heuristics": {
                "asens": self.enable_asens,
                "undercover": self.enable_undercover,
                "rins": self.enable_rins,
                "ftg": self.enable_ftg,
                "qubo_bipartite": self.enable_qubo_bipartite,
            },
        }
