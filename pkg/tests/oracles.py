"""Independent reference models used to check the simulator.

None of these import the code paths they check; they work from flat arrays
and full rule-list scans.
"""

from __future__ import annotations

from allmempro_sim.ept import AccessKind


class FlatMemory:
    """A contiguous byte array standing in for ``[base, base + size)``."""

    def __init__(self, base: int, size: int) -> None:
        self.base = base
        self.buf = bytearray(size)

    def write(self, addr: int, data: bytes) -> None:
        off = addr - self.base
        self.buf[off:off + len(data)] = data

    def read(self, addr: int, length: int) -> bytes:
        off = addr - self.base
        return bytes(self.buf[off:off + length])


def brute_decide(rules, ip: int, addr: int, kind: AccessKind) -> str:
    """Scan every rule; returns one of owner-allow/rule-allow/deny/unprotected."""
    covering = [r for r in rules if r.alloc_addr <= addr < r.alloc_addr + r.alloc_size]
    if not covering:
        return "unprotected"
    if any(r.drv_addr <= ip < r.drv_addr + r.drv_size for r in covering):
        return "owner-allow"
    flag = "is_readable" if kind is AccessKind.READ else "is_overwritable"
    if all(getattr(r, flag) for r in covering):
        return "rule-allow"
    return "deny"


def covered_pages(rules) -> set[int]:
    pages = set()
    for r in rules:
        pages.update(range(r.alloc_addr >> 12, ((r.alloc_addr + r.alloc_size - 1) >> 12) + 1))
    return pages
