"""Capacity allocation game toolkit.

Models networks where each link splits its capacity among the flows
crossing it, computes proportionally fair and iterated equilibrium
allocations, verifies equilibrium and Pareto properties, and solves the
underlying rate-optimization problem as a reference.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .allocators import (
    AllocationTrace,
    CappedBudgetProblem,
    CappedEntry,
    TraceIteration,
    capped_water_fill,
    iterated_allocation,
    one_step_allocation,
    one_step_profile,
    renumber_links,
)
from .equilibrium import (
    EmpiricalPoA,
    EquilibriumReport,
    SerialPoAInputs,
    SerialPoAResult,
    best_response,
    equal_allocation_equilibria,
    nash_check,
    pareto_dominance_sample,
    pinned_profile,
    poa_pos_empirical,
    serial_poa,
)
from .instance_io import (
    chain_instance,
    load,
    load_instance,
    load_profile,
    load_trace,
    random_instance,
    save,
    serial_instance,
    two_link_instance,
)
from .model import (
    InvalidInstanceError,
    InvalidProfileError,
    NetworkInstance,
    PayoffMode,
    RateVector,
    StrategyProfile,
    WelfareValue,
    link_payoffs,
    payoff,
    rates_of,
    utility,
    welfare,
)
from .oracle import DualState, OracleResult, StepSchedule, brute_force_solve, dual_solve
from .simnet import (
    AuditReport,
    Message,
    MessageKind,
    SimulationDidNotConverge,
    SimulationResult,
    message_audit,
    run_simulation,
    save_message_log,
)

__all__ = [
    "AllocationTrace",
    "AuditReport",
    "CappedBudgetProblem",
    "CappedEntry",
    "DualState",
    "EmpiricalPoA",
    "EquilibriumReport",
    "InvalidInstanceError",
    "InvalidProfileError",
    "Message",
    "MessageKind",
    "NetworkInstance",
    "OracleResult",
    "PayoffMode",
    "RateVector",
    "SerialPoAInputs",
    "SerialPoAResult",
    "SimulationDidNotConverge",
    "SimulationResult",
    "StepSchedule",
    "StrategyProfile",
    "TraceIteration",
    "WelfareValue",
    "backend_name",
    "best_response",
    "brute_force_solve",
    "capped_water_fill",
    "chain_instance",
    "dual_solve",
    "equal_allocation_equilibria",
    "iterated_allocation",
    "link_payoffs",
    "load",
    "load_instance",
    "load_profile",
    "load_trace",
    "message_audit",
    "nash_check",
    "one_step_allocation",
    "one_step_profile",
    "pareto_dominance_sample",
    "payoff",
    "pinned_profile",
    "poa_pos_empirical",
    "random_instance",
    "rates_of",
    "renumber_links",
    "run_simulation",
    "save_message_log",
    "save",
    "serial_instance",
    "serial_poa",
    "two_link_instance",
    "utility",
    "welfare",
]
