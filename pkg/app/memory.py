from __future__ import annotations

import hashlib
from typing import Dict, Iterable, Iterator, Tuple


class DeviceMemory:
    """Sparse byte store of one device; pages materialize on first write, reads of holes are zero."""

    __slots__ = ("page_size", "pages", "_zero")

    def __init__(self, page_size: int) -> None:
        self.page_size = page_size
        self.pages: Dict[int, bytearray] = {}
        self._zero = bytes(page_size)

    def read(self, offset: int, size: int) -> bytes:
        dpage, off = divmod(offset, self.page_size)
        buf = self.pages.get(dpage)
        if buf is None:
            return self._zero[:size]
        return bytes(buf[off:off + size])

    def write(self, offset: int, data: bytes) -> None:
        dpage, off = divmod(offset, self.page_size)
        buf = self.pages.get(dpage)
        if buf is None:
            buf = self.pages[dpage] = bytearray(self.page_size)
        buf[off:off + len(data)] = data

    def discard(self, dpage: int) -> None:
        self.pages.pop(dpage, None)

    def __iter__(self) -> Iterator[Tuple[int, bytearray]]:
        return iter(self.pages.items())


def image_checksum(pages: Iterable[Tuple[int, bytes]]) -> str:
    """sha256 over (host page number, contents) of every non-zero page, in page order."""
    h = hashlib.sha256()
    for page, data in sorted(pages, key=lambda kv: kv[0]):
        if any(data):
            h.update(page.to_bytes(8, "little"))
            h.update(data)
    return h.hexdigest()
