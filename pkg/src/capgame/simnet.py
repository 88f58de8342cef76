"""Lockstep message-passing execution of the iterated allocator.

Link agents own one allocation row and see only their own flows; source
agents see only the allocations offered to them. A round has four phases,
with delivery inside the round:

1. links whose carried rates exhaust their capacity signal saturation to
   their sources,
2. newly saturated sources relay the signal to the other links on their
   path, which pin the flow at its final rate,
3. links with changed pin sets re-split their capacity and advertise
   allocations to the affected sources,
4. sources move their rate to the minimum offered allocation and report it
   to the links on their path.

Detecting fullness before re-splitting keeps every round within 2x the
number of routing entries in messages: saturation traffic is charged to
the flows pinned this round, update and report traffic to the entries of
the flows still growing. Agents act in index order, so a run is
deterministic. The simulation stops at the first round with no messages
and no state change.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._backend import waterfill
from .allocators import SATURATION_RTOL
from .model import NetworkInstance, StrategyProfile


class MessageKind(enum.Enum):
    RATE_REPORT = "rate-report"
    SATURATION_SIGNAL = "saturation-signal"
    ALLOCATION_UPDATE = "allocation-update"


AgentId = tuple[str, int]  # ("link", l) or ("source", r)


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    flow: int
    value: float | None
    sender: AgentId
    receiver: AgentId
    round: int


class SimulationDidNotConverge(RuntimeError):
    """The agents were still active after the round budget ran out."""


class LinkAgent:
    """Owns one link: its capacity split, the rates it has heard, and the
    flows it knows to be saturated. Decisions use only this local state."""

    def __init__(self, link_id: int, capacity: float, flows, weights):
        self.id = int(link_id)
        self.capacity = float(capacity)
        self.flows = [int(r) for r in flows]
        self.weight_of = {r: float(w) for r, w in zip(self.flows, weights)}
        self.alloc: dict[int, float] = {r: 0.0 for r in self.flows}
        self.rates: dict[int, float] = {}
        self.pins: dict[int, float] = {}
        self.filled = False
        self.needs_resplit = True

    def resplit(self) -> list[int]:
        """Recompute the row: pinned flows at their final rates, the
        leftover budget proportionally among the rest. Returns the flows
        whose allocation changed."""
        free = [r for r in self.flows if r not in self.pins]
        new_row = dict(self.pins)
        if free:
            pinned_total = sum(self.pins[r] for r in self.flows if r in self.pins)
            budget = max(self.capacity - pinned_total, 0.0)
            weights = np.array([self.weight_of[r] for r in free])
            shares = waterfill(weights, np.full(len(free), np.inf), budget)
            new_row.update({r: float(s) for r, s in zip(free, shares)})
        changed = [r for r in self.flows if new_row[r] != self.alloc[r]]
        self.alloc = new_row
        self.needs_resplit = False
        return changed

    def carried_load(self) -> float | None:
        if any(r not in self.rates for r in self.flows):
            return None
        return sum(self.rates[r] for r in self.flows)

    def pin(self, flow: int) -> None:
        """Freeze a saturated flow at its last reported rate."""
        if flow not in self.pins:
            self.pins[flow] = self.rates[flow]
            self.alloc[flow] = self.rates[flow]
            if not self.filled:
                self.needs_resplit = True


class SourceAgent:
    """Owns one flow: the offers received per link and the current rate."""

    def __init__(self, flow_id: int, links):
        self.id = int(flow_id)
        self.links = [int(l) for l in links]
        self.offers: dict[int, float] = {}
        self.rate: float | None = None
        self.saturated = False

    def path_minimum(self) -> float | None:
        if any(l not in self.offers for l in self.links):
            return None
        return min(self.offers[l] for l in self.links)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    profile: StrategyProfile
    rounds: int
    message_count: int
    log: tuple[Message, ...]
    round_profiles: tuple[StrategyProfile, ...]


def _snapshot(inst: NetworkInstance, links: list[LinkAgent]) -> StrategyProfile:
    alloc = np.zeros((inst.num_links, inst.num_flows))
    for agent in links:
        for r, value in agent.alloc.items():
            alloc[agent.id, r] = value
    return StrategyProfile(alloc)


def run_simulation(
    inst: NetworkInstance, max_rounds: int | None = None
) -> SimulationResult:
    """Run the agents to quiescence and return the final profile.

    The final profile matches the centralized iterated allocator; the two
    share the split kernel and pin flows at identical rates, so agreement
    is exact up to summation-order noise. Raises SimulationDidNotConverge
    if activity persists past ``max_rounds`` (default ``2 L + 8``), which
    would indicate a livelock bug.
    """
    if max_rounds is None:
        max_rounds = 2 * inst.num_links + 8
    v = inst.alloc_weights()
    links = [
        LinkAgent(l, inst.capacities[l], inst.flows_on(l), v[inst.flows_on(l)])
        for l in range(inst.num_links)
    ]
    sources = [SourceAgent(r, inst.links_of(r)) for r in range(inst.num_flows)]
    log: list[Message] = []
    round_profiles: list[StrategyProfile] = []
    rounds = 0

    for round_no in range(1, max_rounds + 2):
        activity = False

        def send(kind, flow, value, sender, receiver):
            log.append(Message(kind, flow, value, sender, receiver, round_no))

        # Phase 1: links that ran out of capacity signal saturation. The
        # rates in view are the ones of the last completed re-split, so the
        # waves of fills match the centralized iterations.
        signal_senders: dict[int, list[int]] = {}
        for agent in links:
            if agent.filled:
                continue
            load = agent.carried_load()
            if load is None or load < agent.capacity * (1.0 - SATURATION_RTOL):
                continue
            agent.filled = True
            activity = True
            for r in agent.flows:
                already = r in agent.pins
                agent.pin(r)
                if not already:
                    send(
                        MessageKind.SATURATION_SIGNAL,
                        r,
                        None,
                        ("link", agent.id),
                        ("source", r),
                    )
                    signal_senders.setdefault(r, []).append(agent.id)

        # Phase 2: newly saturated sources relay to their other links,
        # which pin the flow at its final rate.
        for source in sources:
            senders = signal_senders.get(source.id)
            if not senders or source.saturated:
                continue
            source.saturated = True
            activity = True
            for l in source.links:
                if l in senders:
                    continue
                send(
                    MessageKind.SATURATION_SIGNAL,
                    source.id,
                    None,
                    ("source", source.id),
                    ("link", l),
                )
                links[l].pin(source.id)

        # Phase 3: links with a changed pin set re-split. Updates for
        # saturated flows are suppressed; their rate is already final.
        for agent in links:
            if agent.filled or not agent.needs_resplit:
                continue
            changed = agent.resplit()
            if changed:
                activity = True
            for r in changed:
                if r in agent.pins:
                    continue
                send(
                    MessageKind.ALLOCATION_UPDATE,
                    r,
                    agent.alloc[r],
                    ("link", agent.id),
                    ("source", r),
                )
                sources[r].offers[agent.id] = agent.alloc[r]

        # Phase 4: sources ramp to the path minimum and report changes.
        for source in sources:
            if source.saturated:
                continue
            new_rate = source.path_minimum()
            if new_rate is None or new_rate == source.rate:
                continue
            source.rate = new_rate
            activity = True
            for l in source.links:
                send(
                    MessageKind.RATE_REPORT,
                    source.id,
                    new_rate,
                    ("source", source.id),
                    ("link", l),
                )
                links[l].rates[source.id] = new_rate

        if not activity:
            break
        rounds = round_no
        round_profiles.append(_snapshot(inst, links))
    else:
        raise SimulationDidNotConverge(
            f"agents still active after {max_rounds} rounds"
        )

    return SimulationResult(
        profile=_snapshot(inst, links),
        rounds=rounds,
        message_count=len(log),
        log=tuple(log),
        round_profiles=tuple(round_profiles),
    )


def save_message_log(path, log) -> None:
    """Dump a message log for external audit tooling, one record per line:
    round, kind, sender, receiver, flow, value."""
    with open(path, "w", encoding="ascii") as fh:
        for msg in log:
            value = "-" if msg.value is None else repr(msg.value)
            fh.write(
                f"{msg.round} {msg.kind.value} "
                f"{msg.sender[0]}:{msg.sender[1]} "
                f"{msg.receiver[0]}:{msg.receiver[1]} "
                f"{msg.flow} {value}\n"
            )


@dataclass(frozen=True)
class AuditReport:
    per_round_counts: dict[int, int]
    locality_ok: bool
    violations: tuple[Message, ...]


def message_audit(inst: NetworkInstance, log) -> AuditReport:
    """Check that every message stayed between a link and a source routed
    through it, and count the traffic per round."""
    counts: dict[int, int] = {}
    violations = []
    for msg in log:
        counts[msg.round] = counts.get(msg.round, 0) + 1
        ends = {msg.sender[0], msg.receiver[0]}
        link = source = None
        if ends == {"link", "source"}:
            for endpoint in (msg.sender, msg.receiver):
                if endpoint[0] == "link":
                    link = endpoint[1]
                else:
                    source = endpoint[1]
        if (
            link is None
            or source is None
            or not (0 <= link < inst.num_links)
            or not (0 <= source < inst.num_flows)
            or inst.routing[link, source] != 1
        ):
            violations.append(msg)
    return AuditReport(
        per_round_counts=counts,
        locality_ok=not violations,
        violations=tuple(violations),
    )
