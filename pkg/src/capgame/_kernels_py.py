"""Pure-NumPy implementations of the hot allocation kernels.

The compiled twin in ``_kernels_cy`` implements the same two functions with
identical semantics; ``capgame._backend`` picks whichever is available.
"""
from __future__ import annotations

import math

import numpy as np

# Lower bound on dual path prices, guards the log-utility rate map.
PRICE_FLOOR = 1e-12


def waterfill(weights: np.ndarray, caps: np.ndarray, budget: float) -> np.ndarray:
    """Split ``budget`` proportionally to ``weights`` under per-entry caps.

    Runs clamp-and-redistribute rounds: entries whose proportional share
    reaches their cap are fixed there and the remainder is re-split among
    the rest. Terminates within ``len(weights)`` rounds. If the caps sum to
    less than the budget the leftover simply stays unallocated.
    """
    w = np.ascontiguousarray(weights, dtype=np.float64)
    cap = np.ascontiguousarray(caps, dtype=np.float64)
    n = w.shape[0]
    alloc = np.zeros(n)
    if n == 0 or budget <= 0.0:
        return alloc
    free = np.ones(n, dtype=bool)
    remaining = float(budget)
    for _ in range(n):
        denom = float(w[free].sum())
        if denom <= 0.0 or remaining <= 0.0:
            break
        share = remaining * w / denom
        clamp = free & (share >= cap)
        if not clamp.any():
            alloc[free] = share[free]
            return alloc
        alloc[clamp] = cap[clamp]
        remaining -= float(cap[clamp].sum())
        free &= ~clamp
        if not free.any():
            break
    return alloc


def dual_chunk(
    edge_links: np.ndarray,
    edge_flows: np.ndarray,
    capacities: np.ndarray,
    flow_weights: np.ndarray,
    gamma: float,
    rate_caps: np.ndarray,
    prices: np.ndarray,
    rate_sum: np.ndarray,
    start_iter: int,
    num_iters: int,
    alpha0: float,
    best_dual: float,
    best_prices: np.ndarray,
    dual_history: np.ndarray | None = None,
) -> float:
    """Run ``num_iters`` projected subgradient steps on the dual prices.

    ``edge_links``/``edge_flows`` list the nonzero routing entries. Updates
    ``prices`` (the per-link multipliers), accumulates the rate iterates
    into ``rate_sum`` for ergodic averaging, tracks the best dual value seen
    (storing its price vector in ``best_prices``), and optionally records
    the per-iteration dual values. Returns the updated best dual value.
    """
    num_flows = flow_weights.shape[0]
    num_links = capacities.shape[0]
    inv_gamma = 1.0 / gamma
    one_minus = 1.0 - gamma
    for i in range(num_iters):
        t = start_iter + i + 1
        q = np.bincount(edge_flows, weights=prices[edge_links], minlength=num_flows)
        np.maximum(q, PRICE_FLOOR, out=q)
        if gamma == 1.0:
            x = flow_weights / q
        else:
            x = (flow_weights / q) ** inv_gamma
        np.minimum(x, rate_caps, out=x)
        if gamma == 1.0:
            u = flow_weights * np.log(x)
        else:
            u = flow_weights * x ** one_minus / one_minus
        g = float(u.sum() - (q * x).sum() + (prices * capacities).sum())
        if dual_history is not None:
            dual_history[i] = g
        if g < best_dual:
            best_dual = g
            best_prices[:] = prices
        rate_sum += x
        load = np.bincount(edge_links, weights=x[edge_flows], minlength=num_links)
        prices += (alpha0 / math.sqrt(t)) * (load - capacities)
        np.maximum(prices, 0.0, out=prices)
    return best_dual
