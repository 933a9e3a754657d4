"""SDN controller core.

The controller is driven by an event loop object exposing ``now_us()`` and
``call_later(delay_us, fn)``. Transports hand it raw bytes per connection;
it frames, decodes and dispatches them, keeps a :class:`NetworkView` of
station associations and RSSI series, and calls registered apps.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

from . import wire
from .wire import (
    EventReport,
    FlowModBody,
    LportStatsReply,
    PportCapsReply,
    WirelessError,
    WirelessErrorCode,
    WirelessEventKind,
)

log = logging.getLogger(__name__)

HANDSHAKE_TIMEOUT_US = 1_000_000
SERIES_CAPACITY = 64
EWMA_ALPHA = 0.3


class Loop(Protocol):
    def now_us(self) -> int: ...

    def call_later(self, delay_us: int, fn: Callable[[], None]) -> None: ...


class Channel(Protocol):
    def send(self, data: bytes) -> None: ...

    def close(self) -> None: ...


class HandshakeErrorKind(enum.Enum):
    VERSION_MISMATCH = "VersionMismatch"
    TIMEOUT = "Timeout"


class HandshakeError(Exception):
    def __init__(self, kind: HandshakeErrorKind, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)


class TransportClosed(Exception):
    pass


class Role(enum.Enum):
    SWITCH = "switch"
    ACCESS_POINT = "access_point"


class ConnState(enum.Enum):
    HELLO_WAIT = "hello_wait"
    FEATURES_WAIT = "features_wait"
    CAPS_WAIT = "caps_wait"
    PORTS_WAIT = "ports_wait"
    READY = "ready"
    CLOSED = "closed"


@dataclass
class DatapathHandle:
    datapath_id: int
    role: Role
    n_ports: int
    conn: Connection = field(repr=False)
    phys_caps: dict[int, PportCapsReply] = field(default_factory=dict)
    lports: dict[int, LportStatsReply] = field(default_factory=dict)

    @property
    def live(self) -> bool:
        return self.conn.state is ConnState.READY


@dataclass(frozen=True)
class RssiSample:
    t_us: int
    rssi_dbm: float
    source: str
    ewma_dbm: float


class RssiSeries:
    """Bounded, strictly time-ordered RSSI samples with a running EWMA.

    A sample with the same timestamp as the tail replaces it; an older one is
    discarded.
    """

    def __init__(self, capacity: int = SERIES_CAPACITY, alpha: float = EWMA_ALPHA):
        self.samples: deque[RssiSample] = deque(maxlen=capacity)
        self.alpha = alpha
        self.count = 0  # total accepted samples, including evicted ones
        self.discarded = 0
        self._prev_ewma: float | None = None

    def __len__(self) -> int:
        return len(self.samples)

    def append(self, t_us: int, rssi: float, source: str) -> bool:
        if self.samples and t_us < self.samples[-1].t_us:
            self.discarded += 1
            return False
        if self.samples and t_us == self.samples[-1].t_us:
            self.samples.pop()
            base = self._prev_ewma
        else:
            base = self.samples[-1].ewma_dbm if self.samples else None
            self._prev_ewma = base
            self.count += 1
        ewma = rssi if base is None else self.alpha * rssi + (1 - self.alpha) * base
        self.samples.append(RssiSample(t_us, rssi, source, ewma))
        return True

    @property
    def ewma(self) -> float | None:
        return self.samples[-1].ewma_dbm if self.samples else None

    @property
    def last_t_us(self) -> int | None:
        return self.samples[-1].t_us if self.samples else None


@dataclass(frozen=True)
class ApRef:
    datapath_id: int
    lport: int


@dataclass
class Association:
    ap: ApRef
    since_us: int


class NetworkView:
    def __init__(self, capacity: int = SERIES_CAPACITY):
        self.capacity = capacity
        self.series: dict[tuple[bytes, ApRef], RssiSeries] = {}
        self.associations: dict[bytes, Association] = {}
        self.caps: dict[int, dict[int, PportCapsReply]] = {}

    def add_sample(self, sta: bytes, ap: ApRef, t_us: int, rssi: float, source: str) -> bool:
        s = self.series.get((sta, ap))
        if s is None:
            s = self.series[(sta, ap)] = RssiSeries(self.capacity)
        return s.append(t_us, rssi, source)

    def series_for(self, sta: bytes) -> dict[ApRef, RssiSeries]:
        return {ap: s for (mac, ap), s in self.series.items() if mac == sta}

    def apply_event(self, ev: EventReport, datapath_id: int, t_us: int) -> bool:
        """Fold one event into the view. Returns True if the association changed."""
        ap = ApRef(datapath_id, ev.logical_port)
        kind = ev.event
        if kind == WirelessEventKind.PROBE:
            if ev.rssi_dbm != wire.RSSI_NOT_APPLICABLE:
                self.add_sample(ev.sta_mac, ap, t_us, ev.rssi_dbm, "probe")
            return False
        if kind in (WirelessEventKind.ASSOCIATION, WirelessEventKind.REASSOCIATION):
            cur = self.associations.get(ev.sta_mac)
            if cur is not None and cur.ap == ap:
                return False
            self.associations[ev.sta_mac] = Association(ap, t_us)
            return True
        if kind in (WirelessEventKind.DISASSOCIATION, WirelessEventKind.DEAUTHENTICATION):
            cur = self.associations.get(ev.sta_mac)
            if cur is not None and cur.ap == ap:
                del self.associations[ev.sta_mac]
                return True
        return False


class App:
    """Base class for controller applications; every hook is optional."""

    controller: Controller

    def attach(self, controller: Controller) -> None:
        self.controller = controller

    def on_datapath_up(self, handle: DatapathHandle) -> None:
        pass

    def on_association(self, sta: bytes, ap: ApRef, kind: WirelessEventKind) -> None:
        pass

    def on_disassociation(self, sta: bytes, ap: ApRef, kind: WirelessEventKind) -> None:
        pass

    def on_tick(self, now_us: int) -> None:
        pass


class Connection:
    def __init__(self, controller: Controller, channel: Channel, name: str = ""):
        self.controller = controller
        self.channel = channel
        self.name = name
        self.state = ConnState.HELLO_WAIT
        self.reader = wire.FrameReader()
        self.handle: DatapathHandle | None = None
        self.error: Exception | None = None
        self.xid = 0
        self.sent_xids: list[int] = []
        self._caps_pending: set[int] = set()
        self._barrier_xid: int | None = None
        self._n_ports = 0
        self._dpid = 0
        self._caps: dict[int, PportCapsReply] = {}
        self._lports: dict[int, LportStatsReply] = {}

    def send(self, msg_factory: Callable[[int], wire.OfMessage]) -> int:
        if self.state is ConnState.CLOSED:
            raise TransportClosed(self.name)
        self.xid += 1
        self.sent_xids.append(self.xid)
        self.channel.send(wire.encode(msg_factory(self.xid)))
        return self.xid

    def close(self, error: Exception | None = None) -> None:
        if self.state is ConnState.CLOSED:
            return
        self.state = ConnState.CLOSED
        self.error = error
        self.channel.close()


class Controller:
    def __init__(self, loop: Loop, poll_period_s: float = 0.5, tick_s: float = 0.01):
        self.loop = loop
        self.poll_period_us = round(poll_period_s * 1_000_000)
        self.tick_us = round(tick_s * 1_000_000)
        self.view = NetworkView()
        self.handles: dict[int, DatapathHandle] = {}
        self.connections: list[Connection] = []
        self.apps: list[App] = []
        self.errors: list[tuple[int, str]] = []
        self.log: list[tuple[int, str]] = []
        self.polls: dict[tuple[int, int], int] = {}
        self.unanswered: dict[tuple[int, int], int] = {}
        self._outstanding: dict[tuple[int, int], tuple[int, int]] = {}  # (dpid, xid) -> (dpid, lport)
        self._started = False

    # -- lifecycle -------------------------------------------------------------

    def add_app(self, app: App) -> App:
        app.attach(self)
        self.apps.append(app)
        return app

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self.loop.call_later(self.tick_us, self._tick)
        self.loop.call_later(self.poll_period_us, self._poll)

    def _tick(self) -> None:
        now = self.loop.now_us()
        for app in self.apps:
            app.on_tick(now)
        self.loop.call_later(self.tick_us, self._tick)

    def _note(self, text: str) -> None:
        self.log.append((self.loop.now_us(), text))
        log.debug(text)

    def _error(self, text: str) -> None:
        self.errors.append((self.loop.now_us(), text))
        log.info(text)

    # -- handshake ---------------------------------------------------------------

    def connect(self, channel: Channel, name: str = "") -> Connection:
        """Begin the handshake on a fresh connection."""
        conn = Connection(self, channel, name)
        self.connections.append(conn)
        conn.send(wire.Hello)
        self.loop.call_later(HANDSHAKE_TIMEOUT_US, lambda: self._handshake_timeout(conn))
        return conn

    def _handshake_timeout(self, conn: Connection) -> None:
        if conn.state not in (ConnState.READY, ConnState.CLOSED):
            err = HandshakeError(HandshakeErrorKind.TIMEOUT, conn.name)
            self._error(str(err))
            conn.close(err)

    def receive(self, conn: Connection, data: bytes) -> None:
        """Feed bytes received on ``conn``."""
        if conn.state is ConnState.CLOSED:
            return
        try:
            frames = conn.reader.feed(data)
        except wire.DecodeError as exc:
            self._fail_stream(conn, exc)
            return
        for frame in frames:
            if conn.state is ConnState.CLOSED:
                return
            try:
                msg = wire.decode(frame)
            except wire.DecodeError as exc:
                if conn.state is ConnState.HELLO_WAIT or exc.kind is wire.DecodeErrorKind.BAD_VERSION:
                    self._fail_stream(conn, exc)
                    return
                self._error(f"{conn.name}: undecodable message: {exc}")
                continue
            self._dispatch(conn, msg)

    def _fail_stream(self, conn: Connection, exc: wire.DecodeError) -> None:
        if exc.kind is wire.DecodeErrorKind.BAD_VERSION:
            err: Exception = HandshakeError(HandshakeErrorKind.VERSION_MISMATCH, str(exc))
        else:
            err = exc
        self._error(f"{conn.name}: {err}")
        conn.close(err)

    def _dispatch(self, conn: Connection, msg: wire.OfMessage) -> None:
        st = conn.state
        if isinstance(msg, wire.EchoRequest):
            conn.send(lambda x: wire.EchoReply(msg.xid))
            return
        if st is ConnState.HELLO_WAIT:
            if isinstance(msg, wire.Hello):
                conn.state = ConnState.FEATURES_WAIT
                conn.send(wire.FeaturesRequest)
            return
        if st is ConnState.FEATURES_WAIT:
            if isinstance(msg, wire.FeaturesReply):
                conn._dpid, conn._n_ports = msg.datapath_id, msg.n_ports
                conn.state = ConnState.CAPS_WAIT
                for port in range(1, msg.n_ports + 1):
                    xid = conn.send(lambda x, p=port: wire.Experimenter(x, wire.PportCapsRequest(p)))
                    conn._caps_pending.add(xid)
                self._maybe_caps_done(conn)
            return
        if st is ConnState.CAPS_WAIT:
            if isinstance(msg, wire.Experimenter) and msg.xid in conn._caps_pending:
                conn._caps_pending.discard(msg.xid)
                if isinstance(msg.body, PportCapsReply):
                    conn._caps[msg.body.phys_port] = msg.body
                self._maybe_caps_done(conn)
            return
        if st is ConnState.PORTS_WAIT:
            if isinstance(msg, wire.Experimenter) and isinstance(msg.body, LportStatsReply):
                conn._lports[msg.body.logical_port] = msg.body
            elif isinstance(msg, wire.EchoReply) and msg.xid == conn._barrier_xid:
                self._ready(conn)
            return
        if st is ConnState.READY:
            self._dispatch_ready(conn, msg)

    def _maybe_caps_done(self, conn: Connection) -> None:
        if conn._caps_pending:
            return
        if conn._caps:
            conn.state = ConnState.PORTS_WAIT
            conn.send(lambda x: wire.Experimenter(x, wire.LportStatsRequest(wire.PORT_ANY)))
            conn._barrier_xid = conn.send(wire.EchoRequest)
        else:
            self._ready(conn)

    def _ready(self, conn: Connection) -> None:
        role = Role.ACCESS_POINT if conn._caps else Role.SWITCH
        handle = DatapathHandle(conn._dpid, role, conn._n_ports, conn, dict(conn._caps), dict(conn._lports))
        if conn._dpid in self.handles and self.handles[conn._dpid].live:
            self._error(f"duplicate datapath id {conn._dpid}")
            conn.close()
            return
        conn.state = ConnState.READY
        conn.handle = handle
        self.handles[handle.datapath_id] = handle
        self.view.caps[handle.datapath_id] = dict(handle.phys_caps)
        self._note(f"datapath {handle.datapath_id:#x} up as {role.value}")
        for app in self.apps:
            app.on_datapath_up(handle)

    # -- steady state --------------------------------------------------------------

    def _dispatch_ready(self, conn: Connection, msg: wire.OfMessage) -> None:
        handle = conn.handle
        if isinstance(msg, wire.Experimenter):
            body = msg.body
            key = (handle.datapath_id, msg.xid)
            if key in self._outstanding:
                _, lport = self._outstanding.pop(key)
                if isinstance(body, LportStatsReply):
                    self._merge_stats(handle, body)
                elif isinstance(body, WirelessError):
                    self._error(f"stats for {handle.datapath_id:#x}/{lport}: {body.code.name}")
                return
            if isinstance(body, EventReport):
                self.on_event(body, handle)
            elif isinstance(body, WirelessError):
                self._error(f"{handle.datapath_id:#x}: wireless error {body.code.name} {body.detail!r}")
            elif isinstance(body, LportStatsReply):
                handle.lports[body.logical_port] = body
            elif isinstance(body, PportCapsReply):
                handle.phys_caps[body.phys_port] = body
                self.view.caps.setdefault(handle.datapath_id, {})[body.phys_port] = body
        elif isinstance(msg, wire.Error):
            self._error(f"{handle.datapath_id:#x}: OpenFlow error type={msg.of_type} code={msg.of_code}")

    def on_event(self, ev: EventReport, handle: DatapathHandle | None) -> None:
        if handle is None or handle.datapath_id not in self.handles or handle.role is not Role.ACCESS_POINT:
            self._note(f"dropped event from unknown AP: {ev}")
            return
        now = self.loop.now_us()
        handle.lports.setdefault(ev.logical_port, LportStatsReply(ev.logical_port))
        changed = self.view.apply_event(ev, handle.datapath_id, now)
        if not changed:
            return
        ap = ApRef(handle.datapath_id, ev.logical_port)
        if ev.event in (WirelessEventKind.ASSOCIATION, WirelessEventKind.REASSOCIATION):
            for app in self.apps:
                app.on_association(ev.sta_mac, ap, ev.event)
        else:
            for app in self.apps:
                app.on_disassociation(ev.sta_mac, ap, ev.event)

    def _merge_stats(self, handle: DatapathHandle, reply: LportStatsReply) -> None:
        handle.lports[reply.logical_port] = reply
        now = self.loop.now_us()
        ap = ApRef(handle.datapath_id, reply.logical_port)
        for st in reply.stations:
            if st.rssi_current_dbm != wire.RSSI_NOT_APPLICABLE:
                self.view.add_sample(st.mac, ap, now, st.rssi_current_dbm, "stats")

    def _poll(self) -> None:
        for dpid in sorted(self.handles):
            handle = self.handles[dpid]
            if handle.role is not Role.ACCESS_POINT or not handle.live:
                continue
            for lport in sorted(handle.lports):
                self.poll_lport(handle, lport)
        self.loop.call_later(self.poll_period_us, self._poll)

    def poll_lport(self, handle: DatapathHandle, lport: int) -> int:
        key = (handle.datapath_id, lport)
        stale = [k for k, v in self._outstanding.items() if v == key]
        if stale:
            self.unanswered[key] = self.unanswered.get(key, 0) + 1
            for k in stale:
                del self._outstanding[k]
        xid = handle.conn.send(lambda x: wire.Experimenter(x, wire.LportStatsRequest(lport)))
        self._outstanding[(handle.datapath_id, xid)] = key
        self.polls[key] = self.polls.get(key, 0) + 1
        return xid

    # -- outbound API ------------------------------------------------------------

    def _live_conn(self, handle: DatapathHandle) -> Connection:
        if handle.conn.state is ConnState.CLOSED:
            raise TransportClosed(f"datapath {handle.datapath_id:#x}")
        return handle.conn

    def send_flow_mod(self, handle: DatapathHandle, fm: FlowModBody) -> int:
        return self._live_conn(handle).send(lambda x: wire.FlowMod(x, fm))

    def configure_pport(self, handle: DatapathHandle, phys_port: int, version, channel: int, tx_power_dbm: int) -> int:
        body = wire.PportConfigRequest(phys_port, version, channel, tx_power_dbm)
        return self._live_conn(handle).send(lambda x: wire.Experimenter(x, body))

    def configure_lport(
        self,
        handle: DatapathHandle,
        op: wire.LportOp,
        logical_port: int,
        phys_port: int,
        ssid: str,
        bssid: bytes,
        security: wire.Security = wire.Security.OPEN,
    ) -> int:
        body = wire.LportConfigRequest(op, logical_port, phys_port, ssid, bssid, security)
        return self._live_conn(handle).send(lambda x: wire.Experimenter(x, body))

    def drop_station(self, handle: DatapathHandle, lport: int, sta: bytes) -> int:
        return self._live_conn(handle).send(lambda x: wire.Experimenter(x, wire.DropStation(lport, sta)))

    def request_caps(self, handle: DatapathHandle, phys_port: int) -> int:
        return self._live_conn(handle).send(lambda x: wire.Experimenter(x, wire.PportCapsRequest(phys_port)))


__all__ = [
    "App",
    "ApRef",
    "Association",
    "ConnState",
    "Connection",
    "Controller",
    "DatapathHandle",
    "HandshakeError",
    "HandshakeErrorKind",
    "NetworkView",
    "Role",
    "RssiSample",
    "RssiSeries",
    "TransportClosed",
    "WirelessErrorCode",
]
