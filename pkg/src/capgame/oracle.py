"""Reference solvers for the rate-optimization problem.

``dual_solve`` runs projected subgradient ascent on the Lagrangian dual of
    maximize sum_r u_r(x_r)  s.t.  A x <= c, x >= 0,
recovering a feasible primal from the running average of the rate iterates.
``brute_force_solve`` grids the rate space directly and is the independent
cross-check for the dual solver on tiny instances.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._backend import dual_chunk
from .model import (
    NetworkInstance,
    RateVector,
    utility_values,
)

log = logging.getLogger(__name__)

# Cost guards for the exhaustive oracle.
BRUTE_FORCE_MAX_DIM = 4
BRUTE_FORCE_MAX_POINTS = 30_000_000


@dataclass(frozen=True)
class StepSchedule:
    """Subgradient step rule: alpha_t = alpha0 / sqrt(t)."""

    rule: str = "sqrt-decay"
    alpha0: float | None = None


@dataclass(frozen=True, eq=False)
class DualState:
    """Final multipliers of a dual solve (the prices at the best dual value)."""

    prices: np.ndarray
    schedule: StepSchedule
    iteration: int


@dataclass(frozen=True, eq=False)
class OracleResult:
    rates: RateVector
    objective: float
    duality_gap: float
    converged: bool
    iterations: int
    dual: DualState | None = None
    dual_history: np.ndarray | None = None


def _edge_arrays(inst: NetworkInstance):
    links, flows = np.nonzero(inst.routing)
    return links.astype(np.int64), flows.astype(np.int64)


def _warm_prices(inst: NetworkInstance) -> np.ndarray:
    """Prices that would be exact if each link were the sole bottleneck."""
    v = inst.flow_weights ** (1.0 / inst.gamma)
    per_link = (inst.routing * v[None, :]).sum(axis=1)
    lam = np.zeros(inst.num_links)
    carrying = per_link > 0
    lam[carrying] = (per_link[carrying] / inst.capacities[carrying]) ** inst.gamma
    return lam


def _feasible_rates(
    edge_links: np.ndarray,
    edge_flows: np.ndarray,
    capacities: np.ndarray,
    x: np.ndarray,
) -> np.ndarray:
    """Scale each flow down by the worst relative overload on its path."""
    load = np.bincount(edge_links, weights=x[edge_flows], minlength=capacities.size)
    ratio = load / capacities
    factor = np.ones(x.size)
    np.maximum.at(factor, edge_flows, ratio[edge_links])
    return x / factor


def dual_solve(
    inst: NetworkInstance,
    tol: float = 1e-4,
    max_iter: int = 200_000,
    alpha0: float | None = None,
    eval_stride: int = 50,
    record_dual_history: bool = False,
) -> OracleResult:
    """Solve the rate problem by dual subgradient ascent.

    Multipliers follow ``lam <- max(0, lam + alpha_t (A x(lam) - c))`` with
    ``alpha_t = alpha0 / sqrt(t)`` and ``x_r(lam) = (w_r / q_r)**(1/gamma)``
    for the path price ``q_r``, clamped to the path capacity. Convergence
    means the gap between the best dual value and the best feasible primal
    drops below ``tol * max(1, |objective|)``. Non-convergence within
    ``max_iter`` is reported through the ``converged`` flag, never silently.
    """
    edge_links, edge_flows = _edge_arrays(inst)
    c = inst.capacities
    w = inst.flow_weights
    gamma = inst.gamma
    rate_caps = np.full(inst.num_flows, np.inf)
    np.minimum.at(rate_caps, edge_flows, c[edge_links])

    if alpha0 is None:
        alpha0 = 1.0 / float(c.max())
    schedule = StepSchedule(alpha0=alpha0)

    prices = _warm_prices(inst)
    best_prices = prices.copy()
    rate_sum = np.zeros(inst.num_flows)
    history = np.empty(max_iter) if record_dual_history else None

    best_dual = math.inf
    best_primal = -math.inf
    best_rates = np.zeros(inst.num_flows)
    converged = False
    iters = 0
    while iters < max_iter:
        chunk = min(eval_stride, max_iter - iters)
        hist_slice = history[iters : iters + chunk] if history is not None else None
        best_dual = dual_chunk(
            edge_links,
            edge_flows,
            c,
            w,
            gamma,
            rate_caps,
            prices,
            rate_sum,
            iters,
            chunk,
            alpha0,
            best_dual,
            best_prices,
            hist_slice,
        )
        iters += chunk

        # Primal candidates: ergodic average and the current iterate.
        q = np.bincount(edge_flows, weights=prices[edge_links], minlength=w.size)
        np.maximum(q, 1e-12, out=q)
        current = np.minimum((w / q) ** (1.0 / gamma), rate_caps)
        for candidate in (rate_sum / iters, current):
            feas = _feasible_rates(edge_links, edge_flows, c, candidate)
            value = float(utility_values(feas, w, gamma).sum())
            if value > best_primal:
                best_primal = value
                best_rates = feas
        gap = best_dual - best_primal
        if gap <= tol * max(1.0, abs(best_primal)):
            converged = True
            break

    gap = best_dual - best_primal
    if not converged:
        log.warning(
            "dual solve did not converge: gap %.3g after %d iterations", gap, iters
        )
    return OracleResult(
        rates=RateVector(best_rates),
        objective=best_primal,
        duality_gap=gap,
        converged=converged,
        iterations=iters,
        dual=DualState(prices=best_prices, schedule=schedule, iteration=iters),
        dual_history=history[:iters] if history is not None else None,
    )


def grid_error_bound(inst: NetworkInstance, rates: np.ndarray, grid_step: float) -> float:
    """Lipschitz-style bound on the objective loss of a grid optimum."""
    x = np.maximum(np.asarray(rates, dtype=np.float64), grid_step)
    slopes = inst.flow_weights * x ** (-inst.gamma)
    return 2.0 * grid_step * float(slopes.sum())


def brute_force_solve(inst: NetworkInstance, grid_step: float) -> OracleResult:
    """Exhaustive grid search over feasible rate vectors.

    Enumerates all but one flow on a regular grid; the remaining flow (the
    one with the widest range) is set to the largest feasible grid multiple,
    which is exact on the grid because utilities are increasing. Guarded to
    tiny instances. ``duality_gap`` reports the Lipschitz bound on the
    distance to the true optimum.
    """
    if inst.num_flows > BRUTE_FORCE_MAX_DIM or inst.num_links > BRUTE_FORCE_MAX_DIM:
        raise ValueError(
            f"instance too large for brute force: needs at most "
            f"{BRUTE_FORCE_MAX_DIM} links and flows"
        )
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")

    routing = inst.routing.astype(np.float64)
    caps = inst.capacities
    path_cap = np.where(routing == 1, caps[:, None], np.inf).min(axis=0)

    last = int(np.argmax(path_cap))
    others = [r for r in range(inst.num_flows) if r != last]

    axes = [np.arange(0.0, path_cap[r] + grid_step / 2, grid_step) for r in others]
    total = int(np.prod([a.size for a in axes])) if axes else 1
    if total > BRUTE_FORCE_MAX_POINTS:
        raise ValueError(
            f"grid of {total} points exceeds limit; use a coarser grid_step"
        )

    if others:
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        points = np.zeros((1, 0))

    # Load from the enumerated flows, then headroom for the last flow.
    partial = points @ routing[:, others].T
    feasible = (partial <= caps[None, :] + 1e-12).all(axis=1)
    points = points[feasible]
    partial = partial[feasible]

    on_last = routing[:, last] == 1
    headroom = (caps[None, on_last] - partial[:, on_last]).min(axis=1)
    last_rate = np.floor(headroom / grid_step + 1e-12) * grid_step
    np.maximum(last_rate, 0.0, out=last_rate)

    values = utility_values(last_rate, np.full(last_rate.size, inst.flow_weights[last]), inst.gamma)
    for j, r in enumerate(others):
        values = values + utility_values(
            points[:, j], np.full(points.shape[0], inst.flow_weights[r]), inst.gamma
        )

    best = int(np.argmax(values))
    rates = np.zeros(inst.num_flows)
    rates[others] = points[best]
    rates[last] = last_rate[best]
    objective = float(values[best])
    return OracleResult(
        rates=RateVector(rates),
        objective=objective,
        duality_gap=grid_error_bound(inst, rates, grid_step),
        converged=True,
        iterations=int(points.shape[0]),
        dual=None,
    )
