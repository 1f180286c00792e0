"""The exit-handling state machine that mediates guest memory accesses.

For an access to a trapped page the flow is:

1. EPT violation exit; the policy decides for the accessing instruction.
2. Allowed: open a grant window on the real frame. Denied: open a deny
   window that maps the page to the decoy frame.
3. The single instruction runs against whatever the entry now maps.
4. MTF exit; the window is closed and the entry restored.

So every mediated access costs exactly two exits and every other access none.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .config import SimConfig
from .ept import AccessKind, Check, EptTable, WindowToken
from .errors import EventError, InvariantViolation, UnknownModule, WidthError
from .machine import PAGE_SIZE, Machine, ModuleImage, page_of, page_offset
from .policy import Decision, DecisionKind, MemoryAccessRule, Policy
from .tracelog import (
    Context,
    CostModel,
    Metrics,
    SimClock,
    TraceLine,
    TraceLog,
    dump_window,
    estimate_cost,
    format_access,
    format_denial,
)

MAX_WIDTH = 8


@dataclass(frozen=True)
class AccessEvent:
    """One pre-decoded instruction touching memory.

    For reads ``payload`` only carries the width (its bytes are ignored).
    """

    ip: int
    target: int
    kind: AccessKind
    payload: bytes
    context: Context = field(default_factory=Context)

    @classmethod
    def read(cls, ip: int, target: int, width: int, context: Context | None = None) -> AccessEvent:
        return cls(ip, target, AccessKind.READ, bytes(width), context or Context())

    @classmethod
    def write(cls, ip: int, target: int, data: bytes, context: Context | None = None) -> AccessEvent:
        return cls(ip, target, AccessKind.WRITE, bytes(data), context or Context())

    @property
    def width(self) -> int:
        return len(self.payload)

    def validate(self) -> None:
        if not 1 <= self.width <= MAX_WIDTH:
            raise WidthError(f"access width {self.width} is outside 1..{MAX_WIDTH}")
        if page_offset(self.target) + self.width > PAGE_SIZE:
            raise WidthError(f"access {self.target:#x}+{self.width} crosses a page boundary")
        if not 0 <= self.target < 1 << 64:
            raise WidthError(f"target {self.target:#x} is outside the address space")


@dataclass(frozen=True)
class LoadEvent:
    name: str
    base: int
    size: int
    is_protected: bool = False
    share_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class UnloadEvent:
    name: str


@dataclass(frozen=True)
class AllocEvent:
    driver: str
    addr: int
    size: int


@dataclass(frozen=True)
class FreeEvent:
    driver: str
    addr: int


@dataclass(frozen=True)
class RuleEvent:
    rule: MemoryAccessRule


Event = Union[LoadEvent, UnloadEvent, AllocEvent, FreeEvent, AccessEvent, RuleEvent]


@dataclass(frozen=True)
class EptViolation:
    event: AccessEvent


@dataclass(frozen=True)
class MtfTrap:
    token: WindowToken


VmExit = Union[EptViolation, MtfTrap]


@dataclass(frozen=True)
class AccessOutcome:
    observed: bytes
    denied: bool
    exits: int
    decision: Decision


@dataclass
class EventResult:
    ordinal: int
    event: Event
    value: object
    lines: list[TraceLine]


class Hypervisor:
    """Machine, EPT and policy wired together behind one event entry point."""

    def __init__(self, config: SimConfig | None = None, self_check: bool = False) -> None:
        self.config = config or SimConfig()
        self.self_check = self_check
        self.machine = Machine()
        self.ept = EptTable()
        self.policy = Policy(self.machine, self.ept, self.config.protect_module_image)
        self.metrics = Metrics()
        self.cost_model = CostModel(
            self.config.cached_unprotected, self.config.uncached_unprotected, self.config.mediated
        )
        self.clock = SimClock(self.config.epoch_ms, self.config.ticks_per_ms)
        self.trace = TraceLog()
        self.exit_log: list[VmExit] = []
        self.default_context = Context(self.config.cpu, self.config.pid, self.config.tid, self.config.process)
        self._ordinal = 0

    # -- helpers ------------------------------------------------------------

    def module(self, name: str) -> ModuleImage:
        mod = self.machine.module_by_name(name)
        if mod is None:
            raise UnknownModule(f"no loaded module named {name!r}")
        return mod

    def modeled_ticks(self) -> int:
        return estimate_cost(self.metrics, self.cost_model)

    def decide_access(self, event: AccessEvent) -> Decision:
        """Combine per-byte decisions: any denied byte denies the instruction."""
        first_mediated = None
        for addr in range(event.target, event.target + event.width):
            decision = self.policy.decide(event.ip, addr, event.kind)
            if decision.kind is DecisionKind.DENY:
                return decision
            if first_mediated is None and decision.kind is not DecisionKind.UNPROTECTED:
                first_mediated = decision
        return first_mediated or Decision(DecisionKind.UNPROTECTED)

    def _perform(self, event: AccessEvent) -> bytes:
        """Run the instruction against the frame the EPT entry currently maps."""
        if self.ept.check(event.target, event.kind) is not Check.PERMIT:
            raise InvariantViolation(f"instruction at {event.ip:#x} still lacks the EPT permit")
        pfn = self.ept.translate(event.target)
        off = page_offset(event.target)
        end = off + event.width
        if pfn == self.ept.fake_pfn:
            if event.kind is AccessKind.READ:
                return bytes(self.ept.decoy[off:end])
            self.ept.decoy[off:end] = event.payload
            return bytes(self.ept.decoy[off:end])
        addr = pfn * PAGE_SIZE + off
        if event.kind is AccessKind.WRITE:
            self.machine.raw_write(addr, event.payload)
        return self.machine.raw_read(addr, event.width)

    def assert_quiescent(self) -> None:
        if self.ept.open_window is not None or self.ept.mtf_armed:
            raise InvariantViolation("a grant/deny window is still open")
        if not self.ept.decoy_is_clean():
            raise InvariantViolation("decoy page holds non-zero bytes")
        if not self.metrics.identities_hold():
            raise InvariantViolation(f"metrics identities broken: {self.metrics}")
        self.policy.assert_consistent()

    # -- access mediation ---------------------------------------------------

    def execute_access(self, event: AccessEvent) -> AccessOutcome:
        event.validate()
        now = self.clock.now_ms()

        if self.ept.check(event.target, event.kind) is Check.PERMIT:
            observed = self._perform(event)
            self.metrics.unmediated_accesses += 1
            self.clock.advance(self.cost_model.uncached_unprotected)
            return AccessOutcome(observed, False, 0, Decision(DecisionKind.UNPROTECTED))

        self.exit_log.append(EptViolation(event))
        self.metrics.ept_violations += 1
        decision = self.decide_access(event)
        denied = decision.kind is DecisionKind.DENY

        is_write = event.kind is AccessKind.WRITE
        if is_write:
            win_start, win_len = dump_window(event.target, event.width)
            before = self.machine.raw_read(win_start, win_len)

        page = page_of(event.target)
        if denied:
            token = self.ept.open_deny_window(page, event.kind)
        else:
            token = self.ept.open_grant_window(page, event.kind)
        try:
            observed = self._perform(event)
            self.exit_log.append(MtfTrap(token))
            self.metrics.mtf_traps += 1
        finally:
            self.ept.close_window(token)

        lines: list[TraceLine] = []
        ctx = event.context
        if denied:
            lines += format_denial(event.ip, event.target, event.kind, ctx, now)
            if event.kind is AccessKind.READ:
                self.metrics.denied_reads += 1
            else:
                self.metrics.denied_writes += 1
        else:
            self.metrics.granted_accesses += 1
        src = self.machine.resolve_module(event.ip)
        src_base = src.base if src is not None else None
        if is_write:
            after = self.machine.raw_read(win_start, win_len)
            lines.append(format_access(event.ip, src_base, event.target, event.kind, ctx, now, before, after))
        else:
            lines.append(format_access(event.ip, src_base, event.target, event.kind, ctx, now))
        self.trace.extend(lines)
        self.clock.advance(self.cost_model.mediated)

        if self.self_check:
            self.assert_quiescent()
        return AccessOutcome(observed, denied, 2, decision)

    # -- event loop ---------------------------------------------------------

    def _dispatch(self, event: Event) -> object:
        if isinstance(event, AccessEvent):
            return self.execute_access(event)
        if isinstance(event, LoadEvent):
            return self.machine.register_module(
                event.name, event.base, event.size, event.is_protected, event.share_names
            )
        if isinstance(event, UnloadEvent):
            return self.machine.unregister_module(self.module(event.name).id)
        if isinstance(event, AllocEvent):
            mod = self.module(event.driver)
            if not self.policy.is_tracked(mod.id):
                # the pool hook only reports allocations made by protected drivers
                return []
            return self.policy.on_alloc(mod.id, event.addr, event.size)
        if isinstance(event, FreeEvent):
            mod = self.module(event.driver)
            if self.policy.allocation(event.addr) is None and not self.policy.is_tracked(mod.id):
                return None
            return self.policy.on_free(mod.id, event.addr)
        if isinstance(event, RuleEvent):
            return self.policy.add_rule(event.rule)
        raise TypeError(f"not a simulator event: {event!r}")

    def run_event(self, event: Event) -> EventResult:
        self._ordinal += 1
        mark = len(self.trace.lines)
        try:
            value = self._dispatch(event)
        except Exception as exc:
            if isinstance(exc, (TypeError, InvariantViolation)):
                raise
            raise EventError(self._ordinal, exc) from exc
        return EventResult(self._ordinal, event, value, self.trace.lines[mark:])
