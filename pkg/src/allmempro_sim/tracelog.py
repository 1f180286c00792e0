"""Debug-output rendering, exit metrics and the latency cost model.

Trace lines follow the hypervisor's debug output format::

    22:34:47.513 INF #0 4 7732 System
    S= FFFFF8016F6317C8 (FFFFF8016F630000), D= FFFFA400AC479FD8 (0000000000000000), T= R

Writes append ``,`` and a dump of the 16-byte aligned window around the
target before and after the instruction.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

from .config import format_clock
from .ept import AccessKind
from .machine import fmt_addr

ZERO_FIELD = "0" * 16
DUMP_ALIGN = 16


class LineKind(enum.Enum):
    ACCESS = "access"
    DENIAL_BANNER = "denial_banner"
    MTF_BANNER = "mtf_banner"


@dataclass(frozen=True)
class TraceLine:
    text: str
    kind: LineKind
    clock_ms: int | None = None

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Context:
    """Who the simulated debug output attributes a line to."""

    cpu: int = 0
    pid: int = 4
    tid: int = 7732
    process: str = "System"

    def header(self, clock_ms: int) -> str:
        return f"{format_clock(clock_ms)} INF #{self.cpu} {self.pid} {self.tid} {self.process}"


def dump_window(target: int, width: int) -> tuple[int, int]:
    """Start and length of the 16-byte aligned window holding the access."""
    start = target & ~(DUMP_ALIGN - 1)
    end = -(-(target + width) // DUMP_ALIGN) * DUMP_ALIGN
    return start, end - start


def hex_bytes(data: bytes) -> str:
    return " ".join(f"{b:02x}" for b in data)


def format_access(
    ip: int,
    src_base: int | None,
    target: int,
    kind: AccessKind,
    context: Context,
    clock_ms: int,
    before: bytes = b"",
    after: bytes = b"",
) -> TraceLine:
    src = fmt_addr(src_base) if src_base is not None else ZERO_FIELD
    body = f"S= {fmt_addr(ip)} ({src}), D= {fmt_addr(target)} ({ZERO_FIELD}), T= {kind.value}"
    if kind is AccessKind.WRITE:
        body += f",\n{hex_bytes(before)} => {hex_bytes(after)}"
    return TraceLine(f"{context.header(clock_ms)}\n{body}", LineKind.ACCESS, clock_ms)


def format_denial(
    ip: int,
    target: int,
    kind: AccessKind,
    context: Context,
    clock_ms: int,
) -> list[TraceLine]:
    """Lines printed ahead of the access line when an access is redirected."""
    verb = "READ" if kind is AccessKind.READ else "WRITTEN"
    return [
        TraceLine(f"illegal access {fmt_addr(ip)} ==>> {fmt_addr(target)}", LineKind.DENIAL_BANNER, clock_ms),
        TraceLine(f"** RweHandleMonitorTrapFlag {fmt_addr(ip)} {fmt_addr(target)} **", LineKind.MTF_BANNER, clock_ms),
        TraceLine(
            f"{context.header(clock_ms)}\n"
            f"[Protected via ActiveMemPolice] Memory is being {verb}. Returning fake contents.",
            LineKind.DENIAL_BANNER,
            clock_ms,
        ),
    ]


@dataclass
class Metrics:
    ept_violations: int = 0
    mtf_traps: int = 0
    denied_reads: int = 0
    denied_writes: int = 0
    granted_accesses: int = 0
    unmediated_accesses: int = 0

    @property
    def mediated_accesses(self) -> int:
        return self.granted_accesses + self.denied_reads + self.denied_writes

    def identities_hold(self) -> bool:
        return (
            self.mtf_traps == self.ept_violations
            and self.mediated_accesses == self.ept_violations
        )

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class CostModel:
    """Per-access latency in TSC ticks; each default is a 10-access total / 10.

    This is a model of the reported measurements, not a measurement.
    """

    cached_unprotected: int = 7
    uncached_unprotected: int = 10_000
    mediated: int = 50_000

    def __post_init__(self) -> None:
        if min(self.cached_unprotected, self.uncached_unprotected, self.mediated) <= 0:
            raise ValueError("cost constants must be positive")


def estimate_cost(metrics: Metrics, model: CostModel, n_total_accesses: int | None = None) -> int:
    """Modeled ticks for the accesses counted in ``metrics``.

    With ``n_total_accesses`` every access that was not mediated is charged
    as an uncached unprotected one.
    """
    mediated = metrics.mediated_accesses
    if n_total_accesses is None:
        unmediated = metrics.unmediated_accesses
    else:
        if n_total_accesses < mediated:
            raise ValueError("n_total_accesses is smaller than the mediated count")
        unmediated = n_total_accesses - mediated
    return model.mediated * mediated + model.uncached_unprotected * unmediated


@dataclass
class SimClock:
    epoch_ms: int
    ticks_per_ms: int
    ticks: int = 0

    def now_ms(self) -> int:
        return self.epoch_ms + self.ticks // self.ticks_per_ms

    def advance(self, ticks: int) -> None:
        self.ticks += ticks


@dataclass
class TraceLog:
    lines: list[TraceLine] = field(default_factory=list)

    def extend(self, lines: list[TraceLine]) -> None:
        self.lines.extend(lines)

    def text(self) -> str:
        return "".join(f"{line.text}\n" for line in self.lines)


def metrics_text(metrics: Metrics, modeled_ticks: int, as_json: bool = False) -> str:
    values = {**metrics.as_dict(), "modeled_ticks": modeled_ticks}
    if as_json:
        return json.dumps(values, indent=2) + "\n"
    return "".join(f"{k}={v}\n" for k, v in values.items())
