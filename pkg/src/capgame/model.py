"""Problem data and evaluation primitives for the capacity allocation game.

Links are the players: a strategy splits a link's capacity among the flows
routed through it, and a flow transmits at the minimum allocation along its
path. Flow utilities are isoelastic, ``w * x**(1 - gamma) / (1 - gamma)``
for ``gamma != 1`` and ``w * log(x)`` for ``gamma == 1``.

All types are immutable after construction and all operations are pure, so
values can be shared freely across threads.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Per-link feasibility slack: float closure of the analytic allocators.
FEASIBILITY_RTOL = 1e-9

NEG_INF = float("-inf")


class PayoffMode(str, enum.Enum):
    """How flow utilities are weighted inside link payoffs."""

    UNIFORM = "uniform"          # b_r = 1
    PATH_LENGTH = "path-length"  # b_r = 1 / (links on the flow's path)


class InvalidInstanceError(ValueError):
    """Instance data violates a structural invariant."""


class InvalidProfileError(ValueError):
    """An allocation matrix is not a feasible strategy profile."""


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """A routed network with capacities and utility parameters.

    ``routing`` is an L x R binary matrix with entry 1 when flow r crosses
    link l. The per-flow payoff weights ``b_r`` are derived once from
    ``payoff_mode`` and cached, since path lengths never change.
    """

    routing: np.ndarray
    capacities: np.ndarray
    gamma: float
    flow_weights: np.ndarray
    payoff_mode: PayoffMode = PayoffMode.UNIFORM
    payoff_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        routing = np.array(self.routing)
        if routing.ndim != 2 or routing.size == 0:
            raise InvalidInstanceError("routing must be a nonempty 2-d matrix")
        if not np.isin(routing, (0, 1)).all():
            raise InvalidInstanceError("routing entries must be 0 or 1")
        caps = np.array(self.capacities, dtype=np.float64)
        weights = np.array(self.flow_weights, dtype=np.float64)
        num_links, num_flows = routing.shape
        if caps.shape != (num_links,):
            raise InvalidInstanceError(
                f"expected {num_links} capacities, got shape {caps.shape}"
            )
        if weights.shape != (num_flows,):
            raise InvalidInstanceError(
                f"expected {num_flows} flow weights, got shape {weights.shape}"
            )
        if not (np.isfinite(caps).all() and (caps > 0).all()):
            raise InvalidInstanceError("capacities must be positive and finite")
        if not (np.isfinite(weights).all() and (weights > 0).all()):
            raise InvalidInstanceError("flow weights must be positive and finite")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidInstanceError("gamma must be positive and finite")
        col_sums = routing.sum(axis=0)
        if (col_sums == 0).any():
            bad = int(np.flatnonzero(col_sums == 0)[0])
            raise InvalidInstanceError(f"flow {bad} is not routed over any link")

        mode = PayoffMode(self.payoff_mode)
        if mode is PayoffMode.UNIFORM:
            b = np.ones(num_flows)
        else:
            b = 1.0 / col_sums.astype(np.float64)

        object.__setattr__(self, "routing", _frozen(routing, dtype=np.int8))
        object.__setattr__(self, "capacities", _frozen(caps))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "flow_weights", _frozen(weights))
        object.__setattr__(self, "payoff_mode", mode)
        object.__setattr__(self, "payoff_weights", _frozen(b))

    @property
    def num_links(self) -> int:
        return self.routing.shape[0]

    @property
    def num_flows(self) -> int:
        return self.routing.shape[1]

    def flows_on(self, link: int) -> np.ndarray:
        """Indices of flows routed through ``link``."""
        return np.flatnonzero(self.routing[link])

    def links_of(self, flow: int) -> np.ndarray:
        """Indices of links on the path of ``flow``."""
        return np.flatnonzero(self.routing[:, flow])

    def path_lengths(self) -> np.ndarray:
        return self.routing.sum(axis=0)

    def local_flows(self) -> np.ndarray:
        """Flows that traverse exactly one link."""
        return np.flatnonzero(self.path_lengths() == 1)

    def alloc_weights(self) -> np.ndarray:
        """Proportional-share weights (b_r * w_r)**(1/gamma) per flow."""
        return (self.payoff_weights * self.flow_weights) ** (1.0 / self.gamma)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return (
            np.array_equal(self.routing, other.routing)
            and np.array_equal(self.capacities, other.capacities)
            and self.gamma == other.gamma
            and np.array_equal(self.flow_weights, other.flow_weights)
            and self.payoff_mode == other.payoff_mode
        )


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """An L x R matrix of nonnegative capacity allocations, one row per link."""

    alloc: np.ndarray

    def __post_init__(self):
        alloc = np.array(self.alloc, dtype=np.float64)
        if alloc.ndim != 2:
            raise InvalidProfileError("allocation must be a 2-d matrix")
        object.__setattr__(self, "alloc", _frozen(alloc))

    @classmethod
    def checked(cls, inst: NetworkInstance, alloc) -> "StrategyProfile":
        """Build a profile, validating it against ``inst``."""
        profile = cls(alloc)
        check_profile(inst, profile)
        return profile

    @property
    def shape(self) -> tuple[int, int]:
        return self.alloc.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, StrategyProfile):
            return NotImplemented
        return np.array_equal(self.alloc, other.alloc)


@dataclass(frozen=True, eq=False)
class RateVector:
    """Per-flow transmission rates."""

    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RateVector):
            return NotImplemented
        return np.array_equal(self.rates, other.rates)


@dataclass(frozen=True, order=True)
class WelfareValue:
    """Total utility; ``-inf`` marks a zero rate under log utility."""

    value: float

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


def utility(x: float, w: float, gamma: float) -> float:
    """Isoelastic utility of a single rate.

    Returns 0 at ``x == 0`` when ``gamma < 1`` (the power vanishes) and
    ``-inf`` when ``gamma >= 1`` (log or negative-power divergence).
    """
    if x < 0:
        raise ValueError("rate must be nonnegative")
    if gamma == 1.0:
        return w * math.log(x) if x > 0 else NEG_INF
    if x == 0.0:
        return 0.0 if gamma < 1.0 else NEG_INF
    return w * x ** (1.0 - gamma) / (1.0 - gamma)


def utility_values(rates, weights, gamma: float) -> np.ndarray:
    """Vectorized ``utility`` over per-flow rates."""
    x = np.asarray(rates, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if gamma == 1.0:
        out = np.full(x.shape, NEG_INF)
        pos = x > 0
        out[pos] = w[pos] * np.log(x[pos])
        return out
    if gamma < 1.0:
        return w * x ** (1.0 - gamma) / (1.0 - gamma)
    out = np.full(x.shape, NEG_INF)
    pos = x > 0
    out[pos] = w[pos] * x[pos] ** (1.0 - gamma) / (1.0 - gamma)
    return out


def rates_of(inst: NetworkInstance, profile: StrategyProfile) -> RateVector:
    """Per-flow rates induced by a profile: the path-minimum allocation."""
    alloc = profile.alloc
    if alloc.shape != inst.routing.shape:
        raise InvalidProfileError(
            f"profile shape {alloc.shape} does not match instance "
            f"{inst.routing.shape}"
        )
    masked = np.where(inst.routing == 1, alloc, np.inf)
    return RateVector(masked.min(axis=0))


def _weighted_utilities(inst: NetworkInstance, profile: StrategyProfile) -> np.ndarray:
    x = rates_of(inst, profile).rates
    return inst.payoff_weights * utility_values(x, inst.flow_weights, inst.gamma)


def payoff(inst: NetworkInstance, profile: StrategyProfile, link: int) -> float:
    """Payoff of one link: sum of b_r-weighted utilities of its flows.

    A link carrying no flows earns 0 (empty sum).
    """
    bu = _weighted_utilities(inst, profile)
    return float(bu[inst.routing[link] == 1].sum())


def link_payoffs(inst: NetworkInstance, profile: StrategyProfile) -> np.ndarray:
    """Payoffs of every link at once."""
    bu = _weighted_utilities(inst, profile)
    if np.isneginf(bu).any():
        # 0 * -inf would produce NaN in the matrix product.
        routing = inst.routing
        return np.array(
            [float(bu[routing[l] == 1].sum()) for l in range(inst.num_links)]
        )
    return inst.routing.astype(np.float64) @ bu


def welfare(inst: NetworkInstance, profile: StrategyProfile) -> WelfareValue:
    """Social welfare: unweighted total utility of all flows."""
    x = rates_of(inst, profile).rates
    u = utility_values(x, inst.flow_weights, inst.gamma)
    return WelfareValue(float(u.sum()))


def profile_loads(inst: NetworkInstance, profile: StrategyProfile) -> np.ndarray:
    """Per-link allocated capacity, `sum_r a_lr * s_lr`."""
    return (inst.routing * profile.alloc).sum(axis=1)


def check_profile(
    inst: NetworkInstance,
    profile: StrategyProfile,
    rtol: float = FEASIBILITY_RTOL,
) -> None:
    """Raise InvalidProfileError unless ``profile`` is feasible for ``inst``."""
    ok, detail = feasibility_report(inst, profile, rtol)
    if not ok:
        raise InvalidProfileError(detail)


def feasibility_report(
    inst: NetworkInstance,
    profile: StrategyProfile,
    rtol: float = FEASIBILITY_RTOL,
) -> tuple[bool, str]:
    """Check shape, nonnegativity, off-path zeros, and per-link budgets.

    Returns (ok, human-readable detail with the worst violation).
    """
    alloc = profile.alloc
    if alloc.shape != inst.routing.shape:
        return False, (
            f"profile shape {alloc.shape} does not match instance "
            f"{inst.routing.shape}"
        )
    if (alloc < 0).any():
        return False, "negative allocation entries"
    off_path = alloc[inst.routing == 0]
    if off_path.size and (off_path != 0).any():
        return False, "nonzero allocation for a flow not routed over the link"
    loads = profile_loads(inst, profile)
    excess = loads - inst.capacities * (1.0 + rtol)
    if (excess > 0).any():
        worst = int(np.argmax(excess))
        return False, (
            f"link {worst} over-allocated: load {loads[worst]:.12g} exceeds "
            f"capacity {inst.capacities[worst]:.12g}"
        )
    return True, "feasible"
