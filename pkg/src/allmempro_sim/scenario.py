"""Scenario language: parse, render and run.

One command per line; ``#`` and ``//`` start comments. Numbers are hex
(optional ``0x``, any case) except trace context values, which are decimal::

    config <key> <value>
    load   <name> <base> <size> [protected] [share=<name>[,<name>...]]
    unload <name>
    alloc  <driver> <addr|auto> <size>
    free   <driver> <addr>
    read   <driver> <ip|auto> <addr> <width> [expect=<hex>|zeros] [ctx...]
    write  <driver> <ip|auto> <addr> <hex bytes> [expect=<hex>] [expect_unchanged] [ctx...]
    rule   <drv_addr> <drv_size> <alloc_addr> <alloc_size> [R=<0|1>] [W=<0|1>]

``ctx`` is any of ``cpu=``, ``pid=``, ``tid=``, ``proc=``. Byte strings are
written in memory order, so ``ba0a`` stores the 16-bit value 0x0ABA.
``config`` lines apply to the whole run regardless of where they appear.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Union

from .config import CONFIG_KEYS, SimConfig, apply_overrides, parse_hex, validate_key_value
from .errors import EventError, ParseError, ScenarioRuntimeError
from .machine import PAGE_SIZE, page_of
from .policy import MemoryAccessRule, tokenize, parse_rule_tokens
from .tracelog import Context, Metrics, TraceLine, metrics_text
from .vmm import (
    MAX_WIDTH,
    AccessEvent,
    AccessOutcome,
    AllocEvent,
    FreeEvent,
    Hypervisor,
    LoadEvent,
    RuleEvent,
    UnloadEvent,
)

AUTO_IP_OFFSET = 0x1000
ALLOC_ALIGN = 16


@dataclass(frozen=True)
class ContextOverride:
    cpu: int | None = None
    pid: int | None = None
    tid: int | None = None
    process: str | None = None

    def apply(self, base: Context) -> Context:
        changes = {k: v for k, v in dataclasses.asdict(self).items() if v is not None}
        return dataclasses.replace(base, **changes)

    def tokens(self) -> list[str]:
        out = []
        for key, name in (("cpu", "cpu"), ("pid", "pid"), ("tid", "tid"), ("process", "proc")):
            value = getattr(self, key)
            if value is not None:
                out.append(f"{name}={value}")
        return out


@dataclass(frozen=True)
class Load:
    name: str
    base: int
    size: int
    protected: bool = False
    share: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unload:
    name: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Alloc:
    driver: str
    addr: int | None  # None: bump-allocate
    size: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Free:
    driver: str
    addr: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Read:
    driver: str
    ip: int | None  # None: driver base + AUTO_IP_OFFSET
    addr: int
    width: int
    expect: bytes | None = None
    context: ContextOverride = ContextOverride()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Write:
    driver: str
    ip: int | None
    addr: int
    data: bytes
    expect: bytes | None = None
    expect_unchanged: bool = False
    context: ContextOverride = ContextOverride()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Rule:
    rule: MemoryAccessRule
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Config:
    key: str
    value: str
    line: int = field(default=0, compare=False)


Command = Union[Load, Unload, Alloc, Free, Read, Write, Rule, Config]


@dataclass
class Scenario:
    commands: list[Command]
    source: str = "<string>"
    config: SimConfig = field(default_factory=SimConfig)

    def with_overrides(self, pairs: list[tuple[str, str]]) -> Scenario:
        return dataclasses.replace(self, config=apply_overrides(self.config, pairs))


# -- parsing ----------------------------------------------------------------


def _strip_comment(raw: str) -> str:
    cut = len(raw)
    for marker in ("#", "//"):
        idx = raw.find(marker)
        if idx != -1:
            cut = min(cut, idx)
    return raw[:cut]


class _LineParser:
    def __init__(self, tokens: list[tuple[int, str]], line: int) -> None:
        self.tokens = tokens
        self.line = line
        self.pos = 1

    def error(self, message: str, col: int | None = None) -> ParseError:
        if col is None:
            if self.pos < len(self.tokens):
                col = self.tokens[self.pos][0]
            else:
                last_col, last = self.tokens[-1]
                col = last_col + len(last)
        return ParseError(self.line, col, message)

    def take(self, what: str) -> tuple[int, str]:
        if self.pos >= len(self.tokens):
            raise self.error(f"missing {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def name(self, what: str) -> str:
        col, tok = self.take(what)
        if "=" in tok:
            raise self.error(f"bad {what} {tok!r}", col)
        return tok

    def hex(self, what: str, allow_auto: bool = False) -> int | None:
        col, tok = self.take(what)
        if allow_auto and tok.lower() == "auto":
            return None
        try:
            value = parse_hex(tok)
        except ValueError:
            raise self.error(f"bad hex {what} {tok!r}", col) from None
        if value >= 1 << 64:
            raise self.error(f"{what} {tok!r} exceeds 64 bits", col)
        return value

    def data(self, what: str, col: int, tok: str) -> bytes:
        if len(tok) % 2 or not tok:
            raise self.error(f"{what} needs whole bytes, got {tok!r}", col)
        try:
            value = bytes.fromhex(tok)
        except ValueError:
            raise self.error(f"bad hex bytes {tok!r}", col) from None
        if len(value) > MAX_WIDTH:
            raise self.error(f"{what} longer than {MAX_WIDTH} bytes", col)
        return value

    def rest(self) -> list[tuple[int, str]]:
        out = self.tokens[self.pos:]
        self.pos = len(self.tokens)
        return out


def _context_option(opts: dict[str, object], key: str, value: str, col: int, p: _LineParser) -> bool:
    if key in ("cpu", "pid", "tid"):
        if not value.isdigit():
            raise p.error(f"{key} must be a decimal number", col)
        opts[key] = int(value)
        return True
    if key == "proc":
        if not value:
            raise p.error("proc must not be empty", col)
        opts["process"] = value
        return True
    return False


def _parse_line(tokens: list[tuple[int, str]], line: int) -> Command:
    word = tokens[0][1].lower()
    p = _LineParser(tokens, line)

    if word == "rule":
        return Rule(parse_rule_tokens(tokens, line), line=line)

    if word == "config":
        key = p.name("config key")
        col, value = p.take("config value")
        if key not in CONFIG_KEYS:
            raise p.error(f"unknown config key {key!r}", tokens[1][0])
        try:
            validate_key_value(key, value)
        except ValueError as exc:
            raise p.error(str(exc), col) from None
        if p.pos < len(tokens):
            raise p.error("unexpected trailing text")
        return Config(key, value, line=line)

    if word == "load":
        name = p.name("module name")
        base = p.hex("base")
        size = p.hex("size")
        if not size:
            raise p.error("size must be positive", tokens[3][0])
        protected, share = False, ()
        for col, tok in p.rest():
            if tok.lower() == "protected":
                protected = True
            elif tok.lower().startswith("share="):
                names = tok[6:].split(",")
                if not all(names) or any("=" in n for n in names):
                    raise p.error(f"bad share list {tok!r}", col)
                share = tuple(names)
            else:
                raise p.error(f"unexpected {tok!r}", col)
        return Load(name, base, size, protected, share, line=line)

    if word == "unload":
        name = p.name("module name")
        if p.pos < len(tokens):
            raise p.error("unexpected trailing text")
        return Unload(name, line=line)

    if word == "alloc":
        driver = p.name("driver")
        addr = p.hex("address", allow_auto=True)
        size = p.hex("size")
        if not size:
            raise p.error("size must be positive", tokens[3][0])
        if p.pos < len(tokens):
            raise p.error("unexpected trailing text")
        return Alloc(driver, addr, size, line=line)

    if word == "free":
        driver = p.name("driver")
        addr = p.hex("address")
        if p.pos < len(tokens):
            raise p.error("unexpected trailing text")
        return Free(driver, addr, line=line)

    if word == "read":
        driver = p.name("driver")
        ip = p.hex("ip", allow_auto=True)
        addr = p.hex("address")
        width_col = tokens[p.pos][0] if p.pos < len(tokens) else None
        width = p.hex("width")
        if not 1 <= width <= MAX_WIDTH:
            raise p.error(f"width must be 1..{MAX_WIDTH}", width_col)
        opts: dict[str, object] = {}
        expect = None
        for col, tok in p.rest():
            key, eq, value = tok.partition("=")
            if not eq:
                raise p.error(f"unexpected {tok!r}", col)
            if key == "expect":
                expect = bytes(width) if value.lower() == "zeros" else p.data("expect", col, value)
                if len(expect) != width:
                    raise p.error(f"expect has {len(expect)} bytes, width is {width}", col)
            elif not _context_option(opts, key, value, col, p):
                raise p.error(f"unknown option {key!r}", col)
        return Read(driver, ip, addr, width, expect, ContextOverride(**opts), line=line)

    if word == "write":
        driver = p.name("driver")
        ip = p.hex("ip", allow_auto=True)
        addr = p.hex("address")
        col, tok = p.take("data bytes")
        data = p.data("data", col, tok)
        opts = {}
        expect, unchanged = None, False
        for col, tok in p.rest():
            key, eq, value = tok.partition("=")
            if not eq:
                if tok.lower() == "expect_unchanged":
                    unchanged = True
                    continue
                raise p.error(f"unexpected {tok!r}", col)
            if key == "expect":
                expect = p.data("expect", col, value)
                if len(expect) != len(data):
                    raise p.error(f"expect has {len(expect)} bytes, data has {len(data)}", col)
            elif not _context_option(opts, key, value, col, p):
                raise p.error(f"unknown option {key!r}", col)
        return Write(driver, ip, addr, data, expect, unchanged, ContextOverride(**opts), line=line)

    raise ParseError(line, tokens[0][0], f"unknown command {tokens[0][1]!r}")


def parse(text: str, source: str = "<string>") -> Scenario:
    """Parse scenario text; raises :class:`ParseError` on the first bad line."""
    commands: list[Command] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw)
        if not body.strip():
            continue
        commands.append(_parse_line(tokenize(body), lineno))
    pairs = [(c.key, c.value) for c in commands if isinstance(c, Config)]
    return Scenario(commands, source, apply_overrides(SimConfig(), pairs))


# -- rendering --------------------------------------------------------------


def _ip_text(ip: int | None) -> str:
    return "auto" if ip is None else f"{ip:X}"


def render_command(cmd: Command) -> str:
    if isinstance(cmd, Rule):
        return cmd.rule.to_text()
    if isinstance(cmd, Config):
        return f"config {cmd.key} {cmd.value}"
    if isinstance(cmd, Load):
        parts = ["load", cmd.name, f"{cmd.base:X}", f"{cmd.size:X}"]
        if cmd.protected:
            parts.append("protected")
        if cmd.share:
            parts.append("share=" + ",".join(cmd.share))
        return " ".join(parts)
    if isinstance(cmd, Unload):
        return f"unload {cmd.name}"
    if isinstance(cmd, Alloc):
        addr = "auto" if cmd.addr is None else f"{cmd.addr:X}"
        return f"alloc {cmd.driver} {addr} {cmd.size:X}"
    if isinstance(cmd, Free):
        return f"free {cmd.driver} {cmd.addr:X}"
    if isinstance(cmd, Read):
        parts = ["read", cmd.driver, _ip_text(cmd.ip), f"{cmd.addr:X}", f"{cmd.width:X}"]
        if cmd.expect is not None:
            parts.append(f"expect={cmd.expect.hex()}")
        return " ".join(parts + cmd.context.tokens())
    if isinstance(cmd, Write):
        parts = ["write", cmd.driver, _ip_text(cmd.ip), f"{cmd.addr:X}", cmd.data.hex()]
        if cmd.expect is not None:
            parts.append(f"expect={cmd.expect.hex()}")
        if cmd.expect_unchanged:
            parts.append("expect_unchanged")
        return " ".join(parts + cmd.context.tokens())
    raise TypeError(f"not a command: {cmd!r}")


def render(scenario: Scenario) -> str:
    return "".join(render_command(c) + "\n" for c in scenario.commands)


# -- running ----------------------------------------------------------------


@dataclass(frozen=True)
class Expectation:
    line: int
    description: str
    passed: bool
    detail: str = ""


@dataclass
class CommandOutcome:
    line: int
    text: str
    value: object


@dataclass
class Report:
    source: str
    outcomes: list[CommandOutcome] = field(default_factory=list)
    expectations: list[Expectation] = field(default_factory=list)
    errors: list[ScenarioRuntimeError] = field(default_factory=list)
    metrics: Metrics = field(default_factory=Metrics)
    modeled_ticks: int = 0
    trace: list[TraceLine] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and all(e.passed for e in self.expectations)

    def trace_text(self) -> str:
        return "".join(f"{line.text}\n" for line in self.trace)

    def metrics_text(self, as_json: bool = False) -> str:
        return metrics_text(self.metrics, self.modeled_ticks, as_json)

    def summary(self) -> str:
        out = []
        for exp in self.expectations:
            status = "PASS" if exp.passed else "FAIL"
            detail = f" ({exp.detail})" if exp.detail and not exp.passed else ""
            out.append(f"{status} line {exp.line}: {exp.description}{detail}")
        for err in self.errors:
            out.append(f"ERROR {err}")
        out.append(f"{'OK' if self.ok else 'FAILED'}: {self.source}")
        return "\n".join(out) + "\n"

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "ok": self.ok,
            "expectations": [dataclasses.asdict(e) for e in self.expectations],
            "errors": [str(e) for e in self.errors],
            "metrics": {**self.metrics.as_dict(), "modeled_ticks": self.modeled_ticks},
            "trace": [line.text for line in self.trace],
        }


class Runner:
    """Executes one scenario against a fresh hypervisor."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.hv = Hypervisor(scenario.config)
        self.report = Report(scenario.source)
        self._cursor = scenario.config.pool_base

    def _ip(self, driver: str, ip: int | None) -> int:
        mod = self.hv.module(driver)
        if ip is None:
            ip = mod.base + AUTO_IP_OFFSET
        if not mod.contains(ip):
            raise ValueError(f"ip {ip:X} is outside {driver} [{mod.base:X}+{mod.size:X})")
        return ip

    def _bump(self, size: int) -> int:
        addr = -(-self._cursor // ALLOC_ALIGN) * ALLOC_ALIGN
        self._cursor = addr + size
        return addr

    def _expect(self, cmd: Command, description: str, passed: bool, detail: str = "") -> None:
        self.report.expectations.append(Expectation(cmd.line, description, passed, detail))

    def _execute(self, cmd: Command) -> object:
        hv = self.hv
        if isinstance(cmd, Config):
            return None
        if isinstance(cmd, Load):
            return hv.run_event(LoadEvent(cmd.name, cmd.base, cmd.size, cmd.protected, cmd.share)).value
        if isinstance(cmd, Unload):
            return hv.run_event(UnloadEvent(cmd.name)).value
        if isinstance(cmd, Rule):
            return hv.run_event(RuleEvent(cmd.rule)).value
        if isinstance(cmd, Free):
            return hv.run_event(FreeEvent(cmd.driver, cmd.addr)).value
        if isinstance(cmd, Alloc):
            hv.module(cmd.driver)
            if cmd.addr is None:
                addr = self._bump(cmd.size)
            else:
                addr = cmd.addr
                if cmd.addr >= self.scenario.config.pool_base:
                    self._cursor = max(self._cursor, cmd.addr + cmd.size)
            rules = hv.run_event(AllocEvent(cmd.driver, addr, cmd.size)).value
            return addr, rules

        ctx = cmd.context.apply(hv.default_context)
        ip = self._ip(cmd.driver, cmd.ip)
        if isinstance(cmd, Read):
            outcome: AccessOutcome = hv.run_event(AccessEvent.read(ip, cmd.addr, cmd.width, ctx)).value
            if cmd.expect is not None:
                self._expect(
                    cmd, f"read {cmd.addr:X} expect={cmd.expect.hex()}",
                    outcome.observed == cmd.expect, f"observed {outcome.observed.hex()}",
                )
            return outcome

        page_base = page_of(cmd.addr) * PAGE_SIZE
        snapshot = hv.machine.raw_read(page_base, PAGE_SIZE)
        outcome = hv.run_event(AccessEvent.write(ip, cmd.addr, cmd.data, ctx)).value
        if cmd.expect_unchanged:
            after = hv.machine.raw_read(page_base, PAGE_SIZE)
            self._expect(
                cmd, f"write {cmd.addr:X} leaves memory unchanged", after == snapshot,
                f"memory now {hv.machine.raw_read(cmd.addr, len(cmd.data)).hex()}",
            )
        if cmd.expect is not None:
            actual = hv.machine.raw_read(cmd.addr, len(cmd.expect))
            self._expect(
                cmd, f"write {cmd.addr:X} expect={cmd.expect.hex()}",
                actual == cmd.expect, f"memory holds {actual.hex()}",
            )
        return outcome

    def run(self) -> Report:
        for cmd in self.scenario.commands:
            try:
                value = self._execute(cmd)
            except Exception as exc:
                underlying = exc.error if isinstance(exc, EventError) else exc
                self.report.errors.append(ScenarioRuntimeError(cmd.line, underlying))
                if not self.scenario.config.continue_on_error:
                    break
                continue
            self.report.outcomes.append(CommandOutcome(cmd.line, render_command(cmd), value))
        self.hv.assert_quiescent()
        self.report.metrics = dataclasses.replace(self.hv.metrics)
        self.report.modeled_ticks = self.hv.modeled_ticks()
        self.report.trace = list(self.hv.trace.lines)
        return self.report


def run(scenario: Scenario) -> Report:
    return Runner(scenario).run()


def run_text(text: str, source: str = "<string>", overrides: list[tuple[str, str]] | None = None) -> Report:
    scenario = parse(text, source)
    if overrides:
        scenario = scenario.with_overrides(overrides)
    return run(scenario)
