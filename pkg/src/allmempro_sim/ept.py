"""Simulated extended page tables.

A flat map from page index to :class:`EptEntry`. Pages without an entry use
the default: identity frame, every permit set. Protection clears the read and
write permits so that any data access raises a violation.

Violations are resolved by opening a one-instruction *window* and arming the
monitor trap flag (MTF). A grant window sets the missing permit on the real
frame; a deny window additionally points the entry at the decoy frame, so the
instruction reads zeros or writes into scratch space. Closing the window
restores the prior entry, disarms MTF and wipes the decoy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import StaleToken, WindowAlreadyOpen
from .machine import PAGE_SIZE, page_of

# one past the last page of a 64-bit space, so it never aliases guest memory
FAKE_PFN = 1 << 52


class AccessKind(str, enum.Enum):
    READ = "R"
    WRITE = "W"


class Check(enum.Enum):
    PERMIT = "permit"
    VIOLATION = "violation"


@dataclass(frozen=True)
class EptEntry:
    pfn: int
    read_permit: bool = True
    write_permit: bool = True
    exec_permit: bool = True

    def permits(self, kind: AccessKind) -> bool:
        return self.read_permit if kind is AccessKind.READ else self.write_permit

    def with_permit(self, kind: AccessKind) -> EptEntry:
        if kind is AccessKind.READ:
            return replace(self, read_permit=True)
        return replace(self, write_permit=True)


@dataclass(frozen=True)
class WindowToken:
    serial: int
    page: int
    kind: AccessKind
    prior: EptEntry
    deny: bool


class EptTable:
    def __init__(self) -> None:
        self._entries: dict[int, EptEntry] = {}
        self.fake_pfn = FAKE_PFN
        self.decoy = bytearray(PAGE_SIZE)
        self.mtf_armed = False
        self._open: WindowToken | None = None
        self._serial = 0

    def entry(self, page: int) -> EptEntry:
        return self._entries.get(page) or EptEntry(pfn=page)

    def touched_pages(self) -> list[int]:
        """Pages whose entry differs from the default."""
        return sorted(self._entries)

    @property
    def open_window(self) -> WindowToken | None:
        return self._open

    def check(self, addr: int, kind: AccessKind) -> Check:
        if self.entry(page_of(addr)).permits(kind):
            return Check.PERMIT
        return Check.VIOLATION

    def translate(self, addr: int) -> int:
        """Frame number currently backing ``addr``."""
        return self.entry(page_of(addr)).pfn

    def clear_rw(self, page: int) -> None:
        cur = self.entry(page)
        self._entries[page] = replace(cur, read_permit=False, write_permit=False)

    def restore_default(self, page: int) -> None:
        self._entries.pop(page, None)

    def _set(self, page: int, entry: EptEntry) -> None:
        if entry == EptEntry(pfn=page):
            self._entries.pop(page, None)
        else:
            self._entries[page] = entry

    def _open_window(self, page: int, kind: AccessKind, deny: bool) -> WindowToken:
        if self._open is not None:
            raise WindowAlreadyOpen(f"window on page {self._open.page:#x} is still open")
        prior = self.entry(page)
        entry = prior.with_permit(kind)
        if deny:
            entry = replace(entry, pfn=self.fake_pfn)
        self._set(page, entry)
        self._serial += 1
        self._open = WindowToken(self._serial, page, kind, prior, deny)
        self.mtf_armed = True
        return self._open

    def open_grant_window(self, page: int, kind: AccessKind) -> WindowToken:
        return self._open_window(page, kind, deny=False)

    def open_deny_window(self, page: int, kind: AccessKind) -> WindowToken:
        return self._open_window(page, kind, deny=True)

    def close_window(self, token: WindowToken) -> None:
        if self._open is None or token != self._open:
            raise StaleToken(f"token #{token.serial} is not the open window")
        self._set(token.page, token.prior)
        self.mtf_armed = False
        self._open = None
        if token.deny:
            self.decoy[:] = bytes(PAGE_SIZE)

    def decoy_is_clean(self) -> bool:
        return not any(self.decoy)
