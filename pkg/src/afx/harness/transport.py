"""Control-channel transports between the controller and datapath agents.

Both transports deliver a sent byte string to the far side after a fixed
simulated latency. The TCP variant additionally pushes every byte through a
real loopback socket pair and hands the far side exactly what came out of
the socket, so framing over a byte stream is exercised for real while the
simulated timeline stays identical to the in-process one.
"""

from __future__ import annotations

import socket
from typing import Callable

from .sim import Simulator


class InProcChannel:
    def __init__(self, sim: Simulator, latency_us: int, deliver: Callable[[bytes], None]):
        self.sim = sim
        self.latency_us = latency_us
        self.deliver = deliver
        self.closed = False
        self.bytes_sent = 0

    def send(self, data: bytes) -> None:
        if self.closed:
            return
        self.bytes_sent += len(data)
        self._schedule(bytes(data))

    def _schedule(self, data: bytes) -> None:
        def arrive():
            if not self.closed:
                self.deliver(data)

        self.sim.call_later(self.latency_us, arrive)

    def close(self) -> None:
        self.closed = True


class TcpChannel(InProcChannel):
    """One direction of a loopback TCP connection."""

    def __init__(self, sim, latency_us, deliver, tx: socket.socket, rx: socket.socket):
        super().__init__(sim, latency_us, deliver)
        self.tx = tx
        self.rx = rx

    def send(self, data: bytes) -> None:
        if self.closed:
            return
        self.bytes_sent += len(data)
        self.tx.sendall(data)
        got = bytearray()
        # the receiver may see the write split into several segments
        while len(got) < len(data):
            chunk = self.rx.recv(len(data) - len(got))
            if not chunk:
                raise ConnectionError("loopback peer closed")
            got += chunk
        self._schedule(bytes(got))


def _socket_pair() -> tuple[socket.socket, socket.socket]:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as lst:
        lst.bind(("127.0.0.1", 0))
        lst.listen(1)
        a = socket.create_connection(lst.getsockname(), timeout=5.0)
        b, _ = lst.accept()
    for s in (a, b):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.settimeout(5.0)
    return a, b


class Duplex:
    """A bidirectional channel: ``a_to_b`` and ``b_to_a`` halves."""

    def __init__(self, a_to_b: InProcChannel, b_to_a: InProcChannel, sockets=()):
        self.a_to_b = a_to_b
        self.b_to_a = b_to_a
        self._sockets = sockets
        a_to_b.close = self.close  # closing either half closes both
        b_to_a.close = self.close

    def close(self) -> None:
        InProcChannel.close(self.a_to_b)
        InProcChannel.close(self.b_to_a)
        for s in self._sockets:
            try:
                s.close()
            except OSError:
                pass
        self._sockets = ()


def make_duplex(
    sim: Simulator,
    latency_us: int,
    to_b: Callable[[bytes], None],
    to_a: Callable[[bytes], None],
    tcp: bool = False,
) -> Duplex:
    if not tcp:
        return Duplex(InProcChannel(sim, latency_us, to_b), InProcChannel(sim, latency_us, to_a))
    sa, sb = _socket_pair()
    return Duplex(TcpChannel(sim, latency_us, to_b, sa, sb), TcpChannel(sim, latency_us, to_a, sb, sa), (sa, sb))
