"""Guest kernel address space: sparse byte memory plus the loaded-module registry.

There is a single flat 64-bit kernel virtual address space. Physical frame
numbers coincide with virtual page indices, so the only translation layer
that can redirect an access is the EPT table in :mod:`allmempro_sim.ept`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Protocol

from .errors import DuplicateName, OverlapError, UnknownModule

PAGE_SIZE = 4096
PAGE_SHIFT = 12
ADDRESS_LIMIT = 1 << 64

# byte i of an image is (base + i) mod 256
_IMAGE_PATTERN = bytes(range(256)) * (PAGE_SIZE // 256 + 1)


def fmt_addr(value: int) -> str:
    """Render an address the way debug output does: 16 uppercase hex digits."""
    return f"{value:016X}"


def page_of(addr: int) -> int:
    return addr >> PAGE_SHIFT


def page_offset(addr: int) -> int:
    return addr & (PAGE_SIZE - 1)


def pages_spanning(addr: int, size: int) -> range:
    """Page indices intersecting ``[addr, addr + size)``."""
    if size <= 0:
        return range(0)
    return range(page_of(addr), page_of(addr + size - 1) + 1)


def ranges_overlap(a: int, a_size: int, b: int, b_size: int) -> bool:
    return a < b + b_size and b < a + a_size


@dataclass(frozen=True)
class ModuleImage:
    """A loaded driver image."""

    id: int
    name: str
    base: int
    size: int
    is_protected: bool = False
    share_names: tuple[str, ...] = ()

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.end


class GuestMemory:
    """Sparse page-granular byte store; never-written bytes read as zero."""

    def __init__(self) -> None:
        self._pages: dict[int, bytearray] = {}

    def __len__(self) -> int:
        """Number of materialized pages."""
        return len(self._pages)

    def page(self, index: int) -> bytearray | None:
        return self._pages.get(index)

    def read(self, addr: int, length: int) -> bytes:
        if length < 1:
            raise ValueError("read length must be >= 1")
        if addr < 0 or addr + length > ADDRESS_LIMIT:
            raise ValueError(f"read outside the address space: {addr:#x}+{length:#x}")
        out = bytearray()
        while length:
            off = page_offset(addr)
            n = min(length, PAGE_SIZE - off)
            page = self._pages.get(page_of(addr))
            out += page[off:off + n] if page is not None else bytes(n)
            addr += n
            length -= n
        return bytes(out)

    def write(self, addr: int, data: bytes) -> None:
        if not data:
            raise ValueError("write needs at least one byte")
        if addr < 0 or addr + len(data) > ADDRESS_LIMIT:
            raise ValueError(f"write outside the address space: {addr:#x}+{len(data):#x}")
        view = memoryview(data)
        while view:
            off = page_offset(addr)
            n = min(len(view), PAGE_SIZE - off)
            index = page_of(addr)
            page = self._pages.get(index)
            if page is None:
                page = self._pages[index] = bytearray(PAGE_SIZE)
            page[off:off + n] = view[:n]
            addr += n
            view = view[n:]

    def fill_pattern(self, base: int, size: int) -> None:
        """Fill ``[base, base+size)`` with the synthetic image pattern."""
        addr, end = base, base + size
        while addr < end:
            off = page_offset(addr)
            n = min(end - addr, PAGE_SIZE - off)
            start = addr & 0xFF
            self.write(addr, _IMAGE_PATTERN[start:start + n])
            addr += n

    def zero(self, base: int, size: int) -> None:
        addr, end = base, base + size
        while addr < end:
            off = page_offset(addr)
            n = min(end - addr, PAGE_SIZE - off)
            index = page_of(addr)
            if n == PAGE_SIZE:
                # a fully zeroed page is indistinguishable from an absent one
                self._pages.pop(index, None)
            elif index in self._pages:
                self._pages[index][off:off + n] = bytes(n)
            addr += n


class ModuleObserver(Protocol):
    def on_image_load(self, module: ModuleImage) -> None: ...

    def on_image_unload(self, module: ModuleImage) -> None: ...


@dataclass
class Machine:
    """Guest memory plus the registry of loaded kernel modules."""

    memory: GuestMemory = field(default_factory=GuestMemory)
    _modules: dict[int, ModuleImage] = field(default_factory=dict, repr=False)
    _next_id: int = field(default=1, repr=False)
    _observers: list[ModuleObserver] = field(default_factory=list, repr=False)

    def subscribe(self, observer: ModuleObserver) -> None:
        self._observers.append(observer)

    def modules(self) -> Iterator[ModuleImage]:
        return iter(sorted(self._modules.values(), key=lambda m: m.base))

    def module(self, module_id: int) -> ModuleImage:
        try:
            return self._modules[module_id]
        except KeyError:
            raise UnknownModule(f"no module with id {module_id}") from None

    def module_by_name(self, name: str) -> ModuleImage | None:
        for mod in self._modules.values():
            if mod.name == name:
                return mod
        return None

    def register_module(
        self,
        name: str,
        base: int,
        size: int,
        is_protected: bool = False,
        share_names: tuple[str, ...] | list[str] = (),
    ) -> int:
        """Load a module image and notify observers. Returns the new module id."""
        if size <= 0:
            raise ValueError(f"module size must be positive, got {size:#x}")
        if base < 0 or base + size > ADDRESS_LIMIT:
            raise ValueError(f"module range {base:#x}+{size:#x} leaves the address space")
        if self.module_by_name(name) is not None:
            raise DuplicateName(f"module {name!r} is already loaded")
        for other in self._modules.values():
            if ranges_overlap(base, size, other.base, other.size):
                raise OverlapError(
                    f"{name} [{fmt_addr(base)}+{size:X}) overlaps {other.name} "
                    f"[{fmt_addr(other.base)}+{other.size:X})"
                )
        mod = ModuleImage(self._next_id, name, base, size, is_protected, tuple(share_names))
        self._next_id += 1
        self._modules[mod.id] = mod
        self.memory.fill_pattern(base, size)
        for observer in self._observers:
            observer.on_image_load(mod)
        return mod.id

    def unregister_module(self, module_id: int) -> None:
        mod = self.module(module_id)
        # observers still see the module as resolvable while tearing down rules
        for observer in self._observers:
            observer.on_image_unload(mod)
        del self._modules[module_id]
        if mod.is_protected:
            self.memory.zero(mod.base, mod.size)

    def resolve_module(self, addr: int) -> ModuleImage | None:
        for mod in self._modules.values():
            if mod.contains(addr):
                return mod
        return None

    def raw_read(self, addr: int, length: int) -> bytes:
        return self.memory.read(addr, length)

    def raw_write(self, addr: int, data: bytes) -> None:
        self.memory.write(addr, data)
