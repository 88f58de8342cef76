"""Instance construction and a line-based text format for instances,
profiles, and traces.

Format version 1. The first line of every file is ``capgame <kind> 1``;
routing rows are written as bitstrings, floats with full ``repr`` precision
so a save/load round trip is exact. Indices in trace files are 0-based.
"""
from __future__ import annotations

import os
from typing import Iterable

import numpy as np

from .allocators import AllocationTrace, TraceIteration
from .model import (
    NetworkInstance,
    PayoffMode,
    StrategyProfile,
)

FORMAT_VERSION = 1


class FileFormatError(ValueError):
    """File cannot be parsed as a capgame artifact."""


class UnsupportedVersionError(FileFormatError):
    """File declares a format version this code does not read."""


def random_instance(
    num_links: int,
    num_flows: int,
    p_route: float,
    cap_range: tuple[float, float],
    gamma: float,
    payoff_mode: PayoffMode = PayoffMode.UNIFORM,
    seed: int = 0,
    randomize_weights: bool = False,
) -> NetworkInstance:
    """Random instance: Bernoulli routing, uniform capacities.

    Each routing entry is 1 with probability ``p_route``. A flow that ends
    up with an all-zero column is repaired by routing it over one uniformly
    random link; at moderate densities the bias is negligible and keeps
    generation linear. Flow weights default to 1; ``randomize_weights``
    draws them uniformly from [0.5, 2]. Deterministic per seed.
    """
    if not 0.0 < p_route <= 1.0:
        raise ValueError("p_route must be in (0, 1]")
    lo, hi = cap_range
    if not 0 < lo <= hi:
        raise ValueError("capacity range must be positive")
    rng = np.random.default_rng(seed)
    routing = (rng.random((num_links, num_flows)) < p_route).astype(np.int8)
    for r in np.flatnonzero(routing.sum(axis=0) == 0):
        routing[rng.integers(num_links), r] = 1
    capacities = rng.uniform(lo, hi, num_links)
    if randomize_weights:
        weights = rng.uniform(0.5, 2.0, num_flows)
    else:
        weights = np.ones(num_flows)
    return NetworkInstance(
        routing=routing,
        capacities=capacities,
        gamma=gamma,
        flow_weights=weights,
        payoff_mode=payoff_mode,
    )


def serial_instance(
    num_links: int,
    cap: float,
    local_weights: Iterable[float],
    long_weight: float,
    gamma: float,
    payoff_mode: PayoffMode = PayoffMode.UNIFORM,
) -> NetworkInstance:
    """Chain of equal-capacity links, one local flow per link, one long flow.

    Flow r < num_links is local to link r; the last flow crosses every
    link, so routing column sums are (1, ..., 1, num_links).
    """
    if num_links < 2:
        raise ValueError("serial topology needs at least 2 links")
    locals_ = list(local_weights)
    if len(locals_) != num_links:
        raise ValueError("need one local weight per link")
    routing = np.zeros((num_links, num_links + 1), dtype=np.int8)
    for l in range(num_links):
        routing[l, l] = 1
    routing[:, num_links] = 1
    return NetworkInstance(
        routing=routing,
        capacities=np.full(num_links, float(cap)),
        gamma=gamma,
        flow_weights=np.array(locals_ + [float(long_weight)]),
        payoff_mode=payoff_mode,
    )


def two_link_instance(
    gamma: float = 1.0,
    payoff_mode: PayoffMode = PayoffMode.UNIFORM,
    capacities: tuple[float, float] = (10.0, 100.0),
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> NetworkInstance:
    """Two links, three flows: flow 0 crosses both links, flow 1 uses only
    link 0, flow 2 only link 1. The canonical bottleneck fixture."""
    return NetworkInstance(
        routing=np.array([[1, 1, 0], [1, 0, 1]], dtype=np.int8),
        capacities=np.array(capacities, dtype=np.float64),
        gamma=gamma,
        flow_weights=np.array(weights, dtype=np.float64),
        payoff_mode=payoff_mode,
    )


def chain_instance(
    num_links: int = 10,
    cap: float = 6.0,
    long_weight: float = 10.0,
    local_weight: float = 2.0,
    gamma: float = 1.0,
    payoff_mode: PayoffMode = PayoffMode.PATH_LENGTH,
) -> NetworkInstance:
    """A chain crossed by one long flow (flow 0) plus a single local flow on
    the first link (flow 1). The minimal topology where path-length payoff
    weighting pulls the equilibrium away from the optimum."""
    routing = np.zeros((num_links, 2), dtype=np.int8)
    routing[:, 0] = 1
    routing[0, 1] = 1
    return NetworkInstance(
        routing=routing,
        capacities=np.full(num_links, float(cap)),
        gamma=gamma,
        flow_weights=np.array([float(long_weight), float(local_weight)]),
        payoff_mode=payoff_mode,
    )


# --- text format -----------------------------------------------------------


def _float_list(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _index_list(values) -> str:
    return " ".join(str(int(v)) for v in sorted(values))


def _instance_lines(inst: NetworkInstance) -> list[str]:
    lines = [
        f"capgame instance {FORMAT_VERSION}",
        f"links {inst.num_links}",
        f"flows {inst.num_flows}",
        f"gamma {inst.gamma!r}",
        f"payoff-mode {inst.payoff_mode.value}",
        f"capacities {_float_list(inst.capacities)}",
        f"weights {_float_list(inst.flow_weights)}",
    ]
    for row in inst.routing:
        lines.append("routing " + "".join(str(int(v)) for v in row))
    return lines


def _profile_lines(profile: StrategyProfile) -> list[str]:
    num_links, num_flows = profile.shape
    lines = [
        f"capgame profile {FORMAT_VERSION}",
        f"links {num_links}",
        f"flows {num_flows}",
    ]
    for row in profile.alloc:
        lines.append("row " + _float_list(row))
    return lines


def _trace_lines(trace: AllocationTrace) -> list[str]:
    if not trace.iterations:
        raise ValueError("refusing to write an empty trace")
    num_links, num_flows = trace.iterations[0].profile.shape
    lines = [
        f"capgame trace {FORMAT_VERSION}",
        f"links {num_links}",
        f"flows {num_flows}",
        f"iterations {len(trace)}",
    ]
    for n, it in enumerate(trace.iterations):
        lines.append(f"iteration {n}")
        lines.append(f"phi {it.phi}")
        lines.append("filled " + _index_list(it.filled))
        lines.append("unsaturated " + _index_list(it.unsaturated))
        for row in it.profile.alloc:
            lines.append("row " + _float_list(row))
    return lines


def save(path: str | os.PathLike, obj) -> None:
    """Write an instance, profile, or trace to ``path``."""
    if isinstance(obj, NetworkInstance):
        lines = _instance_lines(obj)
    elif isinstance(obj, StrategyProfile):
        lines = _profile_lines(obj)
    elif isinstance(obj, AllocationTrace):
        lines = _trace_lines(obj)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class _Parser:
    """Line cursor with contextual errors."""

    def __init__(self, path, text: str):
        self.path = path
        self.lines = [
            line.strip()
            for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        self.pos = 0

    def fail(self, message: str):
        raise FileFormatError(f"{self.path}: {message}")

    def next(self, key: str) -> str:
        if self.pos >= len(self.lines):
            self.fail(f"truncated file, expected '{key} ...'")
        line = self.lines[self.pos]
        self.pos += 1
        head, _, rest = line.partition(" ")
        if head != key:
            self.fail(f"expected '{key} ...', found '{line}'")
        return rest.strip()

    def next_int(self, key: str) -> int:
        raw = self.next(key)
        try:
            return int(raw)
        except ValueError:
            self.fail(f"'{key}' value is not an integer: {raw!r}")

    def next_floats(self, key: str, count: int) -> np.ndarray:
        raw = self.next(key).split()
        if len(raw) != count:
            self.fail(f"'{key}' expected {count} values, found {len(raw)}")
        try:
            return np.array([float(v) for v in raw])
        except ValueError:
            self.fail(f"'{key}' contains a non-numeric value")

    def next_indices(self, key: str) -> frozenset[int]:
        raw = self.next(key).split()
        try:
            return frozenset(int(v) for v in raw)
        except ValueError:
            self.fail(f"'{key}' contains a non-integer index")


def _open_parser(path) -> tuple[_Parser, str]:
    try:
        with open(path, "r", encoding="ascii") as fh:
            text = fh.read()
    except UnicodeDecodeError:
        raise FileFormatError(f"{path}: not a text file")
    parser = _Parser(path, text)
    if not parser.lines:
        parser.fail("empty file")
    header = parser.lines[0].split()
    parser.pos = 1
    if len(header) != 3 or header[0] != "capgame":
        parser.fail(f"bad header {parser.lines[0]!r}")
    kind, version = header[1], header[2]
    if not version.isdigit() or int(version) != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version!r} not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    return parser, kind


def _parse_instance(p: _Parser) -> NetworkInstance:
    num_links = p.next_int("links")
    num_flows = p.next_int("flows")
    if num_links < 1 or num_flows < 1:
        p.fail("links and flows must be at least 1")
    gamma_raw = p.next("gamma")
    try:
        gamma = float(gamma_raw)
    except ValueError:
        p.fail(f"bad gamma {gamma_raw!r}")
    mode_raw = p.next("payoff-mode")
    try:
        mode = PayoffMode(mode_raw)
    except ValueError:
        p.fail(f"unknown payoff mode {mode_raw!r}")
    capacities = p.next_floats("capacities", num_links)
    weights = p.next_floats("weights", num_flows)
    routing = np.zeros((num_links, num_flows), dtype=np.int8)
    for l in range(num_links):
        bits = p.next("routing")
        if len(bits) != num_flows or set(bits) - {"0", "1"}:
            p.fail(f"routing row {l} must be {num_flows} bits of 0/1")
        routing[l] = [int(ch) for ch in bits]
    # Invariant violations surface as InvalidInstanceError, distinct from
    # parse failures.
    return NetworkInstance(
        routing=routing,
        capacities=capacities,
        gamma=gamma,
        flow_weights=weights,
        payoff_mode=mode,
    )


def _parse_rows(p: _Parser, num_links: int, num_flows: int) -> np.ndarray:
    return np.vstack([p.next_floats("row", num_flows) for _ in range(num_links)])


def _parse_profile(p: _Parser) -> StrategyProfile:
    num_links = p.next_int("links")
    num_flows = p.next_int("flows")
    alloc = _parse_rows(p, num_links, num_flows)
    if (alloc < 0).any():
        p.fail("profile rows must be nonnegative")
    return StrategyProfile(alloc)


def _parse_trace(p: _Parser) -> AllocationTrace:
    num_links = p.next_int("links")
    num_flows = p.next_int("flows")
    count = p.next_int("iterations")
    iterations = []
    for n in range(count):
        idx = p.next_int("iteration")
        if idx != n:
            p.fail(f"iteration records out of order: expected {n}, found {idx}")
        phi = p.next_int("phi")
        filled = p.next_indices("filled")
        unsaturated = p.next_indices("unsaturated")
        alloc = _parse_rows(p, num_links, num_flows)
        iterations.append(
            TraceIteration(
                profile=StrategyProfile(alloc),
                unsaturated=unsaturated,
                filled=filled,
                phi=phi,
            )
        )
    return AllocationTrace(tuple(iterations))


_PARSERS = {
    "instance": _parse_instance,
    "profile": _parse_profile,
    "trace": _parse_trace,
}


def load(path: str | os.PathLike):
    """Read a capgame file; the header decides which type comes back."""
    parser, kind = _open_parser(path)
    if kind not in _PARSERS:
        parser.fail(f"unknown artifact kind {kind!r}")
    obj = _PARSERS[kind](parser)
    if parser.pos != len(parser.lines):
        parser.fail(f"trailing content at line {parser.pos + 1}")
    return obj


def _load_typed(path, kind: str):
    obj = load(path)
    expected = {
        "instance": NetworkInstance,
        "profile": StrategyProfile,
        "trace": AllocationTrace,
    }[kind]
    if not isinstance(obj, expected):
        raise FileFormatError(f"{path}: expected a {kind} file")
    return obj


def load_instance(path) -> NetworkInstance:
    return _load_typed(path, "instance")


def load_profile(path) -> StrategyProfile:
    return _load_typed(path, "profile")


def load_trace(path) -> AllocationTrace:
    return _load_typed(path, "trace")
