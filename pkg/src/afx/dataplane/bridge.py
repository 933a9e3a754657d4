"""MAC-learning bridge used by the non-SDN baseline."""

from __future__ import annotations

from typing import Callable, Iterable

DEFAULT_AGING_S = 300.0


class LearningBridge:
    def __init__(self, ports: Callable[[], Iterable[int]], aging_s: float = DEFAULT_AGING_S):
        self._ports = ports
        self.aging_us = int(aging_s * 1_000_000)
        # mac -> (port, learned_at_us)
        self.table: dict[bytes, tuple[int, int]] = {}

    def lookup(self, mac: bytes, now_us: int) -> int | None:
        hit = self.table.get(mac)
        if hit is None:
            return None
        port, at = hit
        if now_us - at >= self.aging_us:
            del self.table[mac]
            return None
        return port

    def forward(self, src: bytes, dst: bytes, in_port: int, now_us: int) -> list[int]:
        self.table[src] = (in_port, now_us)
        port = self.lookup(dst, now_us)
        if port is None:
            return [p for p in self._ports() if p != in_port]
        if port == in_port:
            return []
        return [port]
