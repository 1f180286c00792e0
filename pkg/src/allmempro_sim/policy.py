"""Memory access rules and the allow/deny decision.

A rule binds a driver image range to an allocated byte range. Code executing
inside the driver range has full access to the allocated bytes; everybody
else is bound by the rule's ``is_readable`` / ``is_overwritable`` flags.

:class:`Policy` keeps the live rule list in step with image load/unload and
pool alloc/free events, and keeps the EPT permits of every covered page
cleared so that accesses to them trap.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field

from .config import parse_hex
from .ept import AccessKind, EptTable
from .errors import (
    DuplicateRule,
    InvalidRule,
    InvariantViolation,
    NotOwner,
    OverlapError,
    ParseError,
    UnknownAllocation,
    UntrackedOwner,
)
from .machine import ADDRESS_LIMIT, Machine, ModuleImage, fmt_addr, page_of, pages_spanning, ranges_overlap


@dataclass(frozen=True)
class MemoryAccessRule:
    drv_addr: int
    drv_size: int
    alloc_addr: int
    alloc_size: int
    is_readable: bool = False
    is_overwritable: bool = False

    def __post_init__(self) -> None:
        if self.drv_size <= 0 or self.alloc_size <= 0:
            raise InvalidRule("rule sizes must be positive")
        for start, size in ((self.drv_addr, self.drv_size), (self.alloc_addr, self.alloc_size)):
            if start < 0 or start + size > ADDRESS_LIMIT:
                raise InvalidRule(f"range {start:#x}+{size:#x} leaves the address space")
        if ranges_overlap(self.drv_addr, self.drv_size, self.alloc_addr, self.alloc_size):
            raise InvalidRule("driver range and allocated range overlap")

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.drv_addr, self.drv_size, self.alloc_addr, self.alloc_size)

    @property
    def alloc_range(self) -> tuple[int, int]:
        return (self.alloc_addr, self.alloc_size)

    def covers(self, addr: int) -> bool:
        return self.alloc_addr <= addr < self.alloc_addr + self.alloc_size

    def owns(self, ip: int) -> bool:
        return self.drv_addr <= ip < self.drv_addr + self.drv_size

    def others_may(self, kind: AccessKind) -> bool:
        return self.is_readable if kind is AccessKind.READ else self.is_overwritable

    def pages(self) -> range:
        return pages_spanning(self.alloc_addr, self.alloc_size)

    def to_text(self) -> str:
        text = f"rule {self.drv_addr:X} {self.drv_size:X} {self.alloc_addr:X} {self.alloc_size:X}"
        if self.is_readable or self.is_overwritable:
            text += f" R={int(self.is_readable)} W={int(self.is_overwritable)}"
        return text


def tokenize(text: str) -> list[tuple[int, str]]:
    """Whitespace tokens with their 1-based columns."""
    out, col = [], 0
    for tok in text.split():
        col = text.index(tok, col)
        out.append((col + 1, tok))
        col += len(tok)
    return out


def parse_rule_tokens(tokens: list[tuple[int, str]], line: int = 1) -> MemoryAccessRule:
    """Parse ``rule`` command tokens given as ``(column, text)`` pairs."""
    if not tokens or tokens[0][1].lower() != "rule":
        raise ParseError(line, tokens[0][0] if tokens else 1, "expected 'rule'")
    values = []
    for col, tok in tokens[1:5]:
        try:
            values.append(parse_hex(tok))
        except ValueError:
            raise ParseError(line, col, f"bad hex number {tok!r}") from None
    if len(values) < 4:
        end_col = tokens[-1][0] + len(tokens[-1][1])
        raise ParseError(line, end_col, "rule needs <drv_addr> <drv_size> <alloc_addr> <alloc_size>")
    flags = {"R": False, "W": False}
    seen: set[str] = set()
    for col, tok in tokens[5:]:
        name, eq, val = tok.partition("=")
        name = name.upper()
        if not eq or name not in flags or val not in ("0", "1"):
            raise ParseError(line, col, f"expected R=<0|1> or W=<0|1>, got {tok!r}")
        if name in seen:
            raise ParseError(line, col, f"flag {name} given twice")
        seen.add(name)
        flags[name] = val == "1"
    try:
        return MemoryAccessRule(*values, is_readable=flags["R"], is_overwritable=flags["W"])
    except InvalidRule as exc:
        raise ParseError(line, tokens[1][0], str(exc)) from None


def parse_rule(text: str, line: int = 1) -> MemoryAccessRule:
    """Parse ``rule <drv_addr> <drv_size> <alloc_addr> <alloc_size> [R=0|1] [W=0|1]``."""
    return parse_rule_tokens(tokenize(text), line)


class DecisionKind(enum.Enum):
    OWNER_ALLOW = "owner-allow"
    RULE_ALLOW = "rule-allow"
    DENY = "deny"
    UNPROTECTED = "unprotected"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    rule: MemoryAccessRule | None = None

    @property
    def allowed(self) -> bool:
        return self.kind is not DecisionKind.DENY


@dataclass
class Allocation:
    owner: int
    addr: int
    size: int
    rules: list[MemoryAccessRule] = field(default_factory=list)


class Policy:
    """Rule store plus the decision logic; observes module load/unload."""

    def __init__(self, machine: Machine, ept: EptTable, protect_module_image: bool = False) -> None:
        self.machine = machine
        self.ept = ept
        self.protect_module_image = protect_module_image
        self._rules: list[MemoryAccessRule] = []
        self._keys: set[tuple[int, int, int, int]] = set()
        self._by_page: dict[int, list[MemoryAccessRule]] = defaultdict(list)
        self._tracked: dict[int, ModuleImage] = {}
        self._allocations: dict[int, Allocation] = {}
        # protected images guarded as if by an implicit owner-only rule
        self._guards: dict[int, ModuleImage] = {}
        self._guard_pages: dict[int, list[ModuleImage]] = defaultdict(list)
        machine.subscribe(self)

    # -- queries ------------------------------------------------------------

    @property
    def rules(self) -> list[MemoryAccessRule]:
        return list(self._rules)

    def is_tracked(self, module_id: int) -> bool:
        return module_id in self._tracked

    def allocations(self) -> list[Allocation]:
        return sorted(self._allocations.values(), key=lambda a: a.addr)

    def allocation(self, addr: int) -> Allocation | None:
        return self._allocations.get(addr)

    def protected_pages(self) -> set[int]:
        pages = {p for p, rules in self._by_page.items() if rules}
        pages.update(p for p, mods in self._guard_pages.items() if mods)
        return pages

    def decide(self, ip: int, addr: int, kind: AccessKind) -> Decision:
        page = page_of(addr)
        covering = [r for r in self._by_page.get(page, ()) if r.covers(addr)]
        guards = [m for m in self._guard_pages.get(page, ()) if m.contains(addr)]
        if not covering and not guards:
            return Decision(DecisionKind.UNPROTECTED)
        for rule in covering:
            if rule.owns(ip):
                return Decision(DecisionKind.OWNER_ALLOW, rule)
        if any(m.contains(ip) for m in guards):
            return Decision(DecisionKind.OWNER_ALLOW)
        if guards:
            return Decision(DecisionKind.DENY, covering[0] if covering else None)
        for rule in covering:
            if not rule.others_may(kind):
                return Decision(DecisionKind.DENY, rule)
        return Decision(DecisionKind.RULE_ALLOW, covering[0])

    # -- mutation -----------------------------------------------------------

    def _insert(self, rule: MemoryAccessRule) -> None:
        self._rules.append(rule)
        self._keys.add(rule.key)
        for page in rule.pages():
            self._by_page[page].append(rule)
            self.ept.clear_rw(page)

    def _remove(self, doomed: list[MemoryAccessRule]) -> None:
        if not doomed:
            return
        keys = {r.key for r in doomed}
        self._rules = [r for r in self._rules if r.key not in keys]
        self._keys -= keys
        touched: set[int] = set()
        for rule in doomed:
            for page in rule.pages():
                bucket = [r for r in self._by_page[page] if r.key not in keys]
                if bucket:
                    self._by_page[page] = bucket
                else:
                    del self._by_page[page]
                touched.add(page)
        self._refresh(touched)

    def _refresh(self, pages: set[int]) -> None:
        protected = self.protected_pages()
        for page in pages:
            if page in protected:
                self.ept.clear_rw(page)
            else:
                self.ept.restore_default(page)

    def add_rule(self, rule: MemoryAccessRule) -> None:
        if rule.key in self._keys:
            raise DuplicateRule(f"rule already present: {rule.to_text()}")
        self._insert(rule)

    def on_image_load(self, module: ModuleImage) -> None:
        if not module.is_protected:
            return
        self._tracked[module.id] = module
        if self.protect_module_image:
            self._guards[module.id] = module
            for page in pages_spanning(module.base, module.size):
                self._guard_pages[page].append(module)
                self.ept.clear_rw(page)

    def on_image_unload(self, module: ModuleImage) -> None:
        self._remove([r for r in self._rules if (r.drv_addr, r.drv_size) == (module.base, module.size)])
        if self._tracked.pop(module.id, None) is None:
            return
        for addr in [a.addr for a in self._allocations.values() if a.owner == module.id]:
            # rules of other sharers, if any, stay in force
            del self._allocations[addr]
        if self._guards.pop(module.id, None) is not None:
            pages = set(pages_spanning(module.base, module.size))
            for page in pages:
                remaining = [m for m in self._guard_pages[page] if m.id != module.id]
                if remaining:
                    self._guard_pages[page] = remaining
                else:
                    del self._guard_pages[page]
            self._refresh(pages)

    def on_alloc(self, owner: int, addr: int, size: int) -> list[MemoryAccessRule]:
        module = self._tracked.get(owner)
        if module is None:
            raise UntrackedOwner(f"module id {owner} is not protected; allocation not mediated")
        if size <= 0:
            raise InvalidRule("allocation size must be positive")
        for rule in self._rules:
            if ranges_overlap(addr, size, rule.alloc_addr, rule.alloc_size):
                raise OverlapError(
                    f"allocation {fmt_addr(addr)}+{size:X} overlaps protected range "
                    f"{fmt_addr(rule.alloc_addr)}+{rule.alloc_size:X}"
                )
        rules = [MemoryAccessRule(module.base, module.size, addr, size)]
        for name in module.share_names:
            sharer = self.machine.module_by_name(name)
            if sharer is not None and sharer.id != module.id:
                rules.append(MemoryAccessRule(sharer.base, sharer.size, addr, size))
        for rule in rules:
            self._insert(rule)
        self._allocations[addr] = Allocation(owner, addr, size, list(rules))
        return rules

    def on_free(self, owner: int, addr: int) -> None:
        alloc = self._allocations.get(addr)
        if alloc is None:
            raise UnknownAllocation(f"no tracked allocation at {fmt_addr(addr)}")
        if alloc.owner != owner:
            raise NotOwner(f"allocation at {fmt_addr(addr)} belongs to module id {alloc.owner}")
        # one pass of zeroes; repeating it changes nothing observable here
        self.machine.raw_write(addr, bytes(alloc.size))
        self._remove([r for r in self._rules if r.alloc_range == (alloc.addr, alloc.size)])
        del self._allocations[addr]

    def assert_consistent(self) -> None:
        """EPT permits match the rule set: covered pages trap, all others are default."""
        protected = self.protected_pages()
        for page in protected:
            entry = self.ept.entry(page)
            if entry.read_permit or entry.write_permit or entry.pfn != page:
                raise InvariantViolation(f"protected page {page:#x} has entry {entry}")
        stray = set(self.ept.touched_pages()) - protected
        if stray:
            raise InvariantViolation(f"unprotected pages with non-default EPT entries: {sorted(stray)}")
