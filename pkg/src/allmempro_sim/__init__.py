"""Deterministic simulator of hypervisor-mediated protection for kernel pool memory.

Allocations made by protected drivers are guarded by memory access rules.
Trapping is page-granular (EPT permits); decisions are byte-granular. Denied
instructions are redirected to a zero-filled decoy page for one instruction
via the monitor trap flag.
"""

from .config import SimConfig
from .ept import AccessKind, Check, EptEntry, EptTable, WindowToken
from .errors import *  # noqa: F401,F403
from .machine import PAGE_SIZE, GuestMemory, Machine, ModuleImage, fmt_addr
from .policy import Decision, DecisionKind, MemoryAccessRule, Policy, parse_rule
from .scenario import Report, Scenario, parse, render, run, run_text
from .tracelog import Context, CostModel, Metrics, TraceLine, estimate_cost, format_access, format_denial
from .vmm import (
    AccessEvent,
    AccessOutcome,
    AllocEvent,
    EptViolation,
    FreeEvent,
    Hypervisor,
    LoadEvent,
    MtfTrap,
    RuleEvent,
    UnloadEvent,
)

__version__ = "0.1.0"
