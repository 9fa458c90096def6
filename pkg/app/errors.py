from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple


class SimError(Exception):
    """Base class for every error raised by the simulator."""


# -------------------- Config / trace parsing --------------------

@dataclass(frozen=True)
class ConfigIssue:
    code: str          # e.g. "CapacityNotPageMultiple"
    field: str         # offending field or key
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.code} ({self.field}): {self.message}"


class ConfigError(SimError):
    def __init__(self, issues: Iterable[ConfigIssue]) -> None:
        self.issues: List[ConfigIssue] = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues) or "invalid config")

    @property
    def codes(self) -> List[str]:
        return [i.code for i in self.issues]


class TraceError(SimError):
    def __init__(self, issues: Iterable[Tuple[int, str]]) -> None:
        self.issues: List[Tuple[int, str]] = list(issues)
        super().__init__("; ".join(f"line {n}: {m}" for n, m in self.issues) or "invalid trace")


# -------------------- Domain errors --------------------

class OutOfWindow(SimError):
    pass


class UnmappedPage(SimError):
    pass


class SwapPagesIdentical(SimError):
    pass


class SwapInProgress(SimError):
    pass


class SamePage(SimError):
    pass


class SameDevice(SimError):
    pass


class OutOfMemory(SimError):
    pass


class UnknownAllocation(SimError):
    pass


class FootprintTooLarge(SimError):
    pass


# -------------------- Internal faults (abort the run) --------------------

class InvariantBreach(SimError):
    pass


class UnknownTag(InvariantBreach):
    pass


class DuplicateCompletion(InvariantBreach):
    pass
