"""Game-theoretic verification: best responses, equilibrium certification,
Pareto dominance sampling, and the serial-network worst-case welfare ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import waterfill
from .model import (
    FEASIBILITY_RTOL,
    NEG_INF,
    NetworkInstance,
    RateVector,
    StrategyProfile,
    WelfareValue,
    link_payoffs,
    payoff,
    welfare,
)

DEFAULT_NASH_RTOL = 1e-6

# Joint-deviation magnitudes are sampled log-uniformly over this relative range.
PARETO_THETA_MIN = 1e-4


@dataclass(frozen=True)
class LinkGap:
    payoff: float
    best_response_payoff: float
    relative_gap: float


@dataclass(frozen=True)
class EquilibriumReport:
    per_link: tuple[LinkGap, ...]
    max_gap: float
    is_nash: bool
    welfare: WelfareValue
    oracle_welfare: float | None = None
    welfare_ratio: float | None = None


def best_response(
    inst: NetworkInstance, profile: StrategyProfile, link: int
) -> tuple[np.ndarray, float]:
    """Payoff-maximizing row for one link, holding the others fixed.

    Allocating a flow above the minimum allocation it receives elsewhere on
    its path is payoff-neutral, so the best response is a capped
    proportional split: each flow is capped at its external path minimum
    (unbounded when this is the flow's only link). Returns the row and its
    payoff.
    """
    on_link = inst.routing[link] == 1
    flows = np.flatnonzero(on_link)
    row = np.zeros(inst.num_flows)
    if flows.size:
        external = np.array(profile.alloc, copy=True)
        external[link, :] = np.inf
        masked = np.where(inst.routing == 1, external, np.inf)
        caps = masked.min(axis=0)[flows]
        v = inst.alloc_weights()[flows]
        # A zero external cap pins the rate at zero regardless; give nothing.
        open_caps = caps > 0
        if open_caps.any():
            row[flows[open_caps]] = waterfill(
                v[open_caps], caps[open_caps], inst.capacities[link]
            )
    candidate = np.array(profile.alloc, copy=True)
    candidate[link] = row
    value = payoff(inst, StrategyProfile(candidate), link)
    return row, value


def _relative_gap(current: float, best: float) -> float:
    if best <= current:
        return 0.0
    if current == NEG_INF:
        return math.inf
    return (best - current) / max(1.0, abs(current))


def nash_check(
    inst: NetworkInstance,
    profile: StrategyProfile,
    rel_tol: float = DEFAULT_NASH_RTOL,
    oracle_welfare: float | None = None,
) -> EquilibriumReport:
    """Certify a profile by measuring every link's best-response gap."""
    payoffs = link_payoffs(inst, profile)
    gaps = []
    for link in range(inst.num_links):
        _, br_value = best_response(inst, profile, link)
        gaps.append(
            LinkGap(
                payoff=float(payoffs[link]),
                best_response_payoff=br_value,
                relative_gap=_relative_gap(float(payoffs[link]), br_value),
            )
        )
    max_gap = max((g.relative_gap for g in gaps), default=0.0)
    total = welfare(inst, profile)
    ratio = None
    if oracle_welfare is not None and total.is_finite and total.value > 0:
        ratio = oracle_welfare / total.value
    return EquilibriumReport(
        per_link=tuple(gaps),
        max_gap=max_gap,
        is_nash=max_gap <= rel_tol,
        welfare=total,
        oracle_welfare=oracle_welfare,
        welfare_ratio=ratio,
    )


@dataclass(frozen=True)
class ParetoSampleResult:
    dominating_found: bool
    witness: StrategyProfile | None
    trials_run: int


def pareto_dominance_sample(
    inst: NetworkInstance,
    profile: StrategyProfile,
    trials: int,
    seed: int,
) -> ParetoSampleResult:
    """Search for a strongly dominating profile by random joint deviations.

    Every trial reallocates every link's row: the row is mixed toward a
    Dirichlet split of the full capacity with a log-uniform mixing weight.
    A witness must weakly improve every link's payoff and strictly improve
    at least one. Finding none is evidence of strong Pareto optimality, not
    proof.
    """
    rng = np.random.default_rng(seed)
    base = link_payoffs(inst, profile)
    routing = inst.routing
    caps = inst.capacities
    flows_per_link = [np.flatnonzero(routing[l]) for l in range(inst.num_links)]
    for trial in range(trials):
        candidate = np.array(profile.alloc, copy=True)
        for link, flows in enumerate(flows_per_link):
            if flows.size == 0:
                continue
            theta = math.exp(rng.uniform(math.log(PARETO_THETA_MIN), 0.0))
            target = caps[link] * rng.dirichlet(np.ones(flows.size))
            candidate[link, flows] = (1 - theta) * candidate[link, flows] + theta * target
        pays = link_payoffs(inst, StrategyProfile(candidate))
        if (pays >= base).all() and (pays > base).any():
            return ParetoSampleResult(True, StrategyProfile(candidate), trial + 1)
    return ParetoSampleResult(False, None, trials)


@dataclass(frozen=True)
class SerialPoAInputs:
    """Serial topology: equal-capacity links in a chain, one local flow per
    link, plus a single long flow crossing every link."""

    num_links: int
    gamma: float
    local_weights: tuple[float, ...]
    long_weight: float
    long_b: float = 1.0

    def __post_init__(self):
        if self.num_links < 2:
            raise ValueError("serial topology needs at least 2 links")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("welfare ratios require gamma strictly in (0, 1)")
        weights = tuple(float(w) for w in self.local_weights)
        if len(weights) != self.num_links:
            raise ValueError("need one local weight per link")
        if any(w <= 0 for w in weights) or self.long_weight <= 0 or self.long_b <= 0:
            raise ValueError("weights must be positive")
        object.__setattr__(self, "local_weights", weights)


@dataclass(frozen=True)
class SerialPoAResult:
    poa1: float
    poa2: float
    poa: float


def serial_poa(inputs: SerialPoAInputs) -> SerialPoAResult:
    """Closed-form worst-case welfare ratios for the serial topology.

    The two candidate worst equilibria are: every link starves the long
    flow, or every link gives its local flow the largest one-step local
    share. The ratio of the optimal welfare to each equilibrium's welfare
    gives the two expressions below; the worst case is their maximum.
    """
    inv_g = 1.0 / inputs.gamma
    total_local = sum(inputs.local_weights)       # W
    top_local = max(inputs.local_weights)         # omega
    a = inputs.long_weight ** inv_g
    b = total_local ** inv_g
    poa1 = (a / b + 1.0) ** inputs.gamma
    e = top_local ** inv_g
    ba = inputs.long_b * a
    poa2 = (
        (a + b) ** inputs.gamma
        * (ba + e) ** (1.0 - inputs.gamma)
        / (ba + total_local * top_local ** (inv_g - 1.0))
    )
    return SerialPoAResult(poa1=poa1, poa2=poa2, poa=max(poa1, poa2))


@dataclass(frozen=True)
class EmpiricalPoA:
    """Bounds from a supplied set of equilibria; an unbounded flag replaces a
    float infinity when an equilibrium has nonpositive welfare."""

    poa_lower_bound: float | None
    poa_unbounded: bool
    pos_upper_bound: float | None
    pos_unbounded: bool
    oracle_welfare: float


def poa_pos_empirical(
    inst: NetworkInstance,
    equilibria: list[StrategyProfile],
    oracle_welfare: float | None = None,
    rel_tol: float = DEFAULT_NASH_RTOL,
) -> EmpiricalPoA:
    """Empirical anarchy/stability bounds from verified equilibria.

    Every supplied profile must pass the equilibrium check. The anarchy
    bound divides the oracle optimum by the worst supplied equilibrium
    welfare (a lower bound, since worse equilibria may exist); the
    stability bound divides by the best one. ``oracle_welfare`` may be
    passed in to reuse a solve; otherwise the dual solver runs here.
    """
    if inst.gamma >= 1.0:
        raise ValueError(
            "anarchy/stability ratios need gamma in (0, 1) so welfare keeps one sign"
        )
    if not equilibria:
        raise ValueError("need at least one equilibrium profile")
    for i, profile in enumerate(equilibria):
        report = nash_check(inst, profile, rel_tol)
        if not report.is_nash:
            raise ValueError(
                f"profile {i} is not an equilibrium (gap {report.max_gap:.3g})"
            )
    if oracle_welfare is None:
        from .oracle import dual_solve

        oracle_welfare = dual_solve(inst).objective
    values = [welfare(inst, p).value for p in equilibria]
    worst, best = min(values), max(values)
    poa_unbounded = worst <= 0
    pos_unbounded = best <= 0
    return EmpiricalPoA(
        poa_lower_bound=None if poa_unbounded else oracle_welfare / worst,
        poa_unbounded=poa_unbounded,
        pos_upper_bound=None if pos_unbounded else oracle_welfare / best,
        pos_unbounded=pos_unbounded,
        oracle_welfare=oracle_welfare,
    )


def pinned_profile(inst: NetworkInstance, rates: RateVector | np.ndarray) -> StrategyProfile:
    """Profile that allocates exactly the given rate on every path link."""
    x = rates.rates if isinstance(rates, RateVector) else np.asarray(rates, float)
    if x.shape != (inst.num_flows,):
        raise ValueError("need one rate per flow")
    if (x < 0).any():
        raise ValueError("rates must be nonnegative")
    loads = (inst.routing * x[None, :]).sum(axis=1)
    if (loads > inst.capacities * (1.0 + FEASIBILITY_RTOL)).any():
        raise ValueError("rates are infeasible for the instance")
    return StrategyProfile(inst.routing * x[None, :])


def equal_allocation_equilibria(
    inst: NetworkInstance, rates: RateVector | np.ndarray
) -> StrategyProfile:
    """Equal-allocation equilibrium for instances without local flows.

    When every flow crosses at least two links, any profile that allocates
    the same value on every link of a flow's path is an equilibrium under
    either payoff mode (no single link can raise a rate alone). Raises if
    the instance carries a local flow, where this construction fails.
    """
    locals_ = inst.local_flows()
    if locals_.size:
        raise ValueError(
            f"instance has single-link flows (e.g. flow {int(locals_[0])}); "
            "equal allocations are not an equilibrium then"
        )
    return pinned_profile(inst, rates)
