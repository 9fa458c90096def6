from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Tuple

from app.core import MemoryRequest, Op, Response
from app.errors import InvariantBreach
from app.memory import image_checksum


class FlatMemory:
    """Reference model: one flat byte space, requests applied one at a time in tag order."""

    def __init__(self, window_base: int, page_size: int) -> None:
        self.window_base = window_base
        self.page_size = page_size
        self.pages: Dict[int, bytearray] = {}

    def _chunks(self, addr: int, size: int):
        off = addr - self.window_base
        end = off + size
        while off < end:
            page, po = divmod(off, self.page_size)
            n = min(end - off, self.page_size - po)
            yield page, po, n
            off += n

    def read(self, addr: int, size: int) -> bytes:
        out = bytearray()
        for page, po, n in self._chunks(addr, size):
            buf = self.pages.get(page)
            out += buf[po:po + n] if buf is not None else bytes(n)
        return bytes(out)

    def write(self, addr: int, data: bytes) -> None:
        pos = 0
        for page, po, n in self._chunks(addr, len(data)):
            buf = self.pages.get(page)
            if buf is None:
                buf = self.pages[page] = bytearray(self.page_size)
            buf[po:po + n] = data[pos:pos + n]
            pos += n

    def apply(self, req: MemoryRequest) -> Optional[bytes]:
        if req.op is Op.WRITE:
            self.write(req.addr, req.payload)
            return None
        return self.read(req.addr, req.size)

    def checksum(self) -> str:
        return image_checksum((p, bytes(b)) for p, b in self.pages.items())


class Verifier:
    """Replays requests against a FlatMemory as their responses are delivered."""

    def __init__(self, window_base: int, page_size: int) -> None:
        self.flat = FlatMemory(window_base, page_size)
        self._pending: Dict[int, MemoryRequest] = {}
        self.checked = 0
        self.mismatches: List[Tuple[int, str]] = []

    def expect(self, req: MemoryRequest) -> None:
        self._pending[req.tag] = req

    def deliver(self, resp: Response) -> None:
        req = self._pending.pop(resp.tag, None)
        if req is None:
            raise InvariantBreach(f"response {resp.tag} has no recorded request")
        want = self.flat.apply(req)
        if req.op is Op.READ and resp.data != want:
            self.mismatches.append((resp.tag, f"read {req.addr:#x}+{req.size} returned stale data"))
        self.checked += 1

    def deliver_all(self, responses: Iterable[Response]) -> None:
        for r in responses:
            self.deliver(r)

    def finish(self, checksum: str) -> None:
        if self._pending:
            raise InvariantBreach(f"{len(self._pending)} requests never answered")
        if checksum != self.flat.checksum():
            self.mismatches.append((-1, "final memory image differs from flat replay"))
        if self.mismatches:
            tag, msg = self.mismatches[0]
            raise InvariantBreach(f"{len(self.mismatches)} mismatches vs flat memory; first: tag {tag}: {msg}")
