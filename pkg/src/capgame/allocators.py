"""Strategy computation: the local one-step split and the iterated allocator.

The one-step allocator gives every link its proportionally fair split in
isolation. The iterated allocator repeats a fill-and-pin cycle: compute
rates, find links whose carried rates exhaust their capacity, freeze the
flows those links bottleneck at their current rates, and let every other
link re-split its leftover capacity among the still-growing flows. The
result is returned in path-minimum form (every on-path allocation equals
the flow's rate), which is what makes the profile an equilibrium.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import waterfill
from .model import NetworkInstance, StrategyProfile, rates_of

# A link counts as filled when its carried rates reach this fraction of
# capacity; the same relative tolerance decides flow saturation.
SATURATION_RTOL = 1e-9

UNBOUNDED = float("inf")


@dataclass(frozen=True)
class CappedEntry:
    """One recipient in a capped proportional split."""

    flow: int
    weight: float               # (b_r * w_r) ** (1/gamma)
    cap: float = UNBOUNDED      # inf = unbounded

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("entry weight must be positive")
        if not self.cap > 0:
            raise ValueError("entry cap must be positive (or unbounded)")


@dataclass(frozen=True)
class CappedBudgetProblem:
    """Distribute a capacity budget proportionally subject to per-flow caps."""

    budget: float
    entries: tuple[CappedEntry, ...]

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "entries", tuple(self.entries))


def capped_water_fill(problem: CappedBudgetProblem) -> tuple[np.ndarray, float]:
    """Solve a capped proportional split.

    Maximizes the total isoelastic utility of the entries subject to the
    budget and the caps. Returns (allocation aligned with the entries,
    unallocated slack). Slack is positive exactly when the caps sum to less
    than the budget; that is a valid outcome, not an error.
    """
    weights = np.array([e.weight for e in problem.entries])
    caps = np.array([e.cap for e in problem.entries])
    alloc = waterfill(weights, caps, problem.budget)
    return alloc, problem.budget - float(alloc.sum())


def one_step_allocation(inst: NetworkInstance, link: int) -> np.ndarray:
    """Closed-form proportionally fair split of one link's capacity.

    ``s_lr = a_lr * c_l * (b_r w_r)**(1/gamma) / sum_j a_lj (b_j w_j)**(1/gamma)``.
    The row sums to the capacity whenever the link carries at least one
    flow, and is all zero otherwise.
    """
    flows = inst.flows_on(link)
    row = np.zeros(inst.num_flows)
    if flows.size == 0:
        return row
    v = inst.alloc_weights()[flows]
    row[flows] = inst.capacities[link] * v / v.sum()
    return row


def one_step_profile(inst: NetworkInstance) -> StrategyProfile:
    """One-step rows for every link."""
    alloc = np.vstack([one_step_allocation(inst, l) for l in range(inst.num_links)])
    return StrategyProfile(alloc)


@dataclass(frozen=True)
class TraceIteration:
    """State of one iteration: the profile it started from, the flows still
    unsaturated, the links currently filled, and the link whose flows got
    pinned this iteration."""

    profile: StrategyProfile
    unsaturated: frozenset[int]
    filled: frozenset[int]
    phi: int


@dataclass(frozen=True)
class AllocationTrace:
    iterations: tuple[TraceIteration, ...]

    def __post_init__(self):
        object.__setattr__(self, "iterations", tuple(self.iterations))

    def __len__(self) -> int:
        return len(self.iterations)

    def pin_order(self) -> list[int]:
        return [it.phi for it in self.iterations]


def _resolve_row(
    inst: NetworkInstance,
    link: int,
    v: np.ndarray,
    pins: np.ndarray,
    unsaturated: np.ndarray,
) -> np.ndarray:
    """Re-split one link: saturated flows stay at their pinned rates, the
    leftover budget goes proportionally to the unsaturated flows."""
    on_link = inst.routing[link] == 1
    row = np.zeros(inst.num_flows)
    pinned = on_link & ~unsaturated
    row[pinned] = pins[pinned]
    free = np.flatnonzero(on_link & unsaturated)
    if free.size:
        budget = max(inst.capacities[link] - float(row[pinned].sum()), 0.0)
        caps = np.full(free.size, UNBOUNDED)
        row[free] = waterfill(v[free], caps, budget)
    return row


def iterated_allocation(
    inst: NetworkInstance, batch_removal: bool = False
) -> tuple[StrategyProfile, AllocationTrace]:
    """Run the iterated allocator and return the final profile plus a trace.

    Starts from the one-step profile. Each iteration finds the filled links
    (carried rates equal to capacity within SATURATION_RTOL), pins the
    flows of the smallest-index filled link not yet processed at their
    current rates, and re-splits every unfilled link's residual capacity
    among the flows that can still grow. With ``batch_removal`` the flows
    of all newly filled links are pinned at once; the final profile is
    identical, only the trace is shorter.

    The returned profile is in path-minimum form: every on-path entry
    equals the flow's rate, so the slack freed on non-bottleneck links is
    visible (and deliberately not redistributed).

    Raises AssertionError if no filled link with unsaturated flows exists
    while flows remain unsaturated, which would indicate a saturation
    tolerance bug.
    """
    num_links, num_flows = inst.routing.shape
    v = inst.alloc_weights()
    alloc = one_step_profile(inst).alloc.copy()
    unsaturated = np.ones(num_flows, dtype=bool)
    considered = np.zeros(num_links, dtype=bool)
    pins = np.zeros(num_flows)
    iterations: list[TraceIteration] = []

    while True:
        x = rates_of(inst, StrategyProfile(alloc)).rates
        loads = (inst.routing * x[None, :]).sum(axis=1)
        filled_mask = loads >= inst.capacities * (1.0 - SATURATION_RTOL)

        # Pick filled links until at least one unsaturated flow gets pinned.
        # Links whose flows were all pinned earlier are consumed silently so
        # every recorded iteration strictly shrinks the unsaturated set.
        newly_saturated = np.zeros(num_flows, dtype=bool)
        phi = -1
        while not newly_saturated.any():
            candidates = np.flatnonzero(filled_mask & ~considered)
            assert candidates.size > 0, (
                "no filled link available while flows remain unsaturated; "
                "saturation tolerance is inconsistent with the allocator"
            )
            if batch_removal:
                considered[candidates] = True
                on_picked = inst.routing[candidates].sum(axis=0) > 0
                newly_saturated = on_picked & unsaturated
                phi = int(candidates[0])
            else:
                pick = int(candidates[0])
                considered[pick] = True
                newly_saturated = (inst.routing[pick] == 1) & unsaturated
                phi = pick

        iterations.append(
            TraceIteration(
                profile=StrategyProfile(alloc.copy()),
                unsaturated=frozenset(np.flatnonzero(unsaturated).tolist()),
                filled=frozenset(np.flatnonzero(filled_mask).tolist()),
                phi=phi,
            )
        )
        pins[newly_saturated] = x[newly_saturated]
        unsaturated &= ~newly_saturated
        if not unsaturated.any():
            break
        for link in np.flatnonzero(~filled_mask):
            alloc[link] = _resolve_row(inst, link, v, pins, unsaturated)

    # Path-minimum form: trim every on-path entry down to the flow's rate.
    x = rates_of(inst, StrategyProfile(alloc)).rates
    final = inst.routing * x[None, :]
    return StrategyProfile(final), AllocationTrace(tuple(iterations))


def renumber_links(inst: NetworkInstance, trace: AllocationTrace) -> list[int]:
    """Links in saturation order, then the never-pinned links in index order.

    Reindexing links by this permutation makes the pinned link of iteration
    n be link n; used for reporting and tests only.
    """
    order = trace.pin_order()
    seen = set(order)
    order.extend(l for l in range(inst.num_links) if l not in seen)
    return order
