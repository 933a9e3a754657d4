"""Single-table match/action pipeline with priority lookup."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .. import kernels
from ..wire import FlowModBody, FlowModCommand, MatchSet, Output

_US = 1_000_000


class FlowModErrorKind(enum.Enum):
    NOT_FOUND = "NotFound"
    EMPTY_MATCH = "EmptyMatch"


class FlowModError(Exception):
    def __init__(self, kind: FlowModErrorKind, fm: FlowModBody):
        self.kind = kind
        self.flow_mod = fm
        super().__init__(f"{kind.value}: priority={fm.priority} match={fm.match}")


@dataclass
class FlowEntry:
    priority: int
    match: MatchSet
    actions: tuple[Output, ...]
    idle_timeout_s: int = 0
    hard_timeout_s: int = 0
    installed_at_us: int = 0
    last_hit_us: int = 0
    packets: int = 0
    bytes: int = 0
    seq: int = field(default=0, repr=False)

    @property
    def key(self) -> tuple[MatchSet, int]:
        return (self.match, self.priority)

    def out_ports(self) -> list[int]:
        return [a.port for a in self.actions]

    def expired(self, now_us: int) -> bool:
        if self.hard_timeout_s and now_us - self.installed_at_us >= self.hard_timeout_s * _US:
            return True
        if self.idle_timeout_s and now_us - self.last_hit_us >= self.idle_timeout_s * _US:
            return True
        return False


class FlowTable:
    """Entries kept sorted by priority (high first), then insertion order.

    An ``Add`` for an existing ``(match, priority)`` replaces the old entry
    (counters reset, insertion order renewed). ``Modify`` and
    ``DeleteStrict`` require an exact ``(match, priority)`` hit.
    """

    def __init__(self) -> None:
        self._entries: list[FlowEntry] = []
        self._in_ports: list[int] = []
        self._dsts: list[bytes] = []
        self._seq = 0
        self._timed = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(list(self._entries))

    def _reindex(self) -> None:
        self._entries.sort(key=lambda e: (-e.priority, e.seq))
        self._in_ports = [-1 if e.match.in_port is None else e.match.in_port for e in self._entries]
        self._dsts = [e.match.eth_dst or b"" for e in self._entries]
        self._timed = sum(1 for e in self._entries if e.idle_timeout_s or e.hard_timeout_s)

    def find(self, match: MatchSet, priority: int) -> FlowEntry | None:
        for e in self._entries:
            if e.priority == priority and e.match == match:
                return e
        return None

    def apply(self, fm: FlowModBody, now_us: int = 0) -> None:
        existing = self.find(fm.match, fm.priority)
        if fm.command == FlowModCommand.ADD:
            if fm.match.is_empty():
                raise FlowModError(FlowModErrorKind.EMPTY_MATCH, fm)
            if existing is not None:
                self._entries.remove(existing)
            self._seq += 1
            self._entries.append(
                FlowEntry(
                    fm.priority,
                    fm.match,
                    tuple(fm.actions),
                    fm.idle_timeout_s,
                    fm.hard_timeout_s,
                    installed_at_us=now_us,
                    last_hit_us=now_us,
                    seq=self._seq,
                )
            )
        elif existing is None:
            raise FlowModError(FlowModErrorKind.NOT_FOUND, fm)
        elif fm.command == FlowModCommand.MODIFY:
            existing.actions = tuple(fm.actions)
        else:
            self._entries.remove(existing)
        self._reindex()

    def expire(self, now_us: int) -> list[FlowEntry]:
        if not self._timed:
            return []
        gone = [e for e in self._entries if e.expired(now_us)]
        if gone:
            self._entries = [e for e in self._entries if not e.expired(now_us)]
            self._reindex()
        return gone

    def lookup(self, in_port: int, eth_dst: bytes) -> FlowEntry | None:
        i = kernels.first_match(self._in_ports, self._dsts, in_port, eth_dst)
        return None if i < 0 else self._entries[i]

    def snapshot(self) -> list[tuple[int, MatchSet, tuple[Output, ...]]]:
        return [(e.priority, e.match, e.actions) for e in self._entries]
