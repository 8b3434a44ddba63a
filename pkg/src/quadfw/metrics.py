"""Benchmark metrics: primal gap, primal integral, time-to-first-feasible,
shifted geometric mean.

Objective values entering these functions are in the instance's original
sense (gaps are sign-sensitive).  Gap values are fractions in [0, 1];
reports multiply by 100 when printing percentages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class IncumbentTrace:
    """Ordered (time, objective) incumbent events over a horizon ``[0, T]``."""

    events: list[tuple[float, float]]
    horizon: float
    reference: float | None = None

    def __post_init__(self) -> None:
        times = [t for t, _ in self.events]
        if any(t < 0 or t > self.horizon for t in times):
            raise ValueError("event times must lie in [0, horizon]")
        if times != sorted(times):
            raise ValueError("event times must be nondecreasing")


def primal_gap(tilde: float | None, star: float) -> float:
    """Gap of a solution value against a reference value, in [0, 1].

    ``None`` means no solution was found and yields gap 1.
    """
    if tilde is None:
        return 1.0
    if abs(tilde) == 0.0 and abs(star) == 0.0:
        return 0.0
    # sign comparison without the product, which can underflow to -0.0
    if (tilde > 0.0) != (star > 0.0) and tilde != 0.0 and star != 0.0:
        return 1.0
    return abs(tilde - star) / max(abs(tilde), abs(star))


def primal_integral(trace: IncumbentTrace) -> float:
    """Time integral of the incumbent's gap over ``[0, T]``.

    The gap is 1 before the first incumbent, so an empty trace integrates
    to the full horizon.
    """
    T = trace.horizon
    if not trace.events:
        return float(T)
    if trace.reference is None:
        raise ValueError("primal integral of a nonempty trace needs a reference value")
    total = 0.0
    prev_t = 0.0
    prev_gap = 1.0
    for (t, value) in trace.events:
        total += prev_gap * (t - prev_t)
        prev_t = t
        prev_gap = primal_gap(value, trace.reference)
    total += prev_gap * (T - prev_t)
    return total


def time_to_first(trace: IncumbentTrace) -> float:
    """Time of the first incumbent, or the horizon when there is none."""
    if not trace.events:
        return float(trace.horizon)
    return trace.events[0][0]


def shifted_geomean(values: list[float], shift: float = 1.0) -> float:
    """exp(mean(ln(v + shift))) - shift over nonnegative values."""
    if not values:
        raise ValueError("shifted geometric mean of an empty list")
    if shift <= 0:
        raise ValueError("shift must be positive")
    if any(v < 0 for v in values):
        raise ValueError("values must be nonnegative")
    return math.exp(sum(math.log(v + shift) for v in values) / len(values)) - shift


def aggregate_table(rows: list[dict], shift: float = 1.0) -> str:
    """Aggregate per-instance metric rows into a text table.

    Each row is a dict with keys ``instance``, ``found`` (bool) and, when
    found, ``ttf``, ``gap`` (fraction or None) and ``pi`` (or None).
    Columns mirror the usual benchmark layout: Found, TTF, Gap (%), PI,
    aggregated with the shifted geometric mean over instances where the
    quantity is defined.
    """
    total = len(rows)
    found_rows = [r for r in rows if r.get("found")]
    ttfs = [r["ttf"] for r in found_rows if r.get("ttf") is not None]
    gaps = [100.0 * r["gap"] for r in found_rows if r.get("gap") is not None]
    pis = [r["pi"] for r in rows if r.get("pi") is not None]

    def fmt(values: list[float]) -> str:
        if not values:
            return "-"
        return f"{shifted_geomean(values, shift):.2f}"

    lines = [
        f"{'Found':>12} {'TTF':>10} {'Gap':>10} {'PI':>10}",
        f"{len(found_rows)}/{total:<5}".rjust(12)
        + f" {fmt(ttfs):>10} {fmt(gaps):>10} {fmt(pis):>10}",
    ]
    return "\n".join(lines)
