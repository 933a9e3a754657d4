"""Simulated switch / access-point data plane and its protocol agent.

A :class:`Datapath` owns wired ports, optional wireless physical ports with
logical (AP) ports on top of them, a flow table, and a learning bridge used
when running in bridge mode. :class:`Agent` speaks the wire protocol on
behalf of a datapath.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

from .. import wire
from ..wire import (
    Dot11Version,
    EventReport,
    LportOp,
    LportStatsReply,
    PportCapsReply,
    Security,
    StationStats,
    WirelessErrorCode,
    WirelessErrorException,
    WirelessEventKind,
)
from .bridge import LearningBridge
from .flowtable import FlowModError, FlowTable

log = logging.getLogger(__name__)

EWMA_ALPHA = 0.3
LPORT_BASE = 100
MAX_FRAME_BYTES = 1518


class Mode(enum.Enum):
    SDN = "sdn"
    BRIDGE = "bridge"


class MgmtKind(enum.Enum):
    """802.11 management frames a station can send to an AP."""

    PROBE = "probe"
    AUTH = "auth"
    ASSOC = "assoc"
    REASSOC = "reassoc"
    DISASSOC = "disassoc"
    DEAUTH = "deauth"


class StationState(enum.IntEnum):
    NOT_AUTHENTICATED = 0
    AUTHENTICATED = 1
    ASSOCIATED = 2
    AUTHORIZED = 3


_S = StationState
_E = WirelessEventKind

# (state, frame) -> (next state, events). Open authentication only; missing
# pairs are out-of-order frames.
TRANSITIONS: dict[tuple[StationState, MgmtKind], tuple[StationState, tuple[WirelessEventKind, ...]]] = {}
for _st in StationState:
    TRANSITIONS[(_st, MgmtKind.PROBE)] = (_st, (_E.PROBE,))
    if _st != _S.NOT_AUTHENTICATED:
        TRANSITIONS[(_st, MgmtKind.DEAUTH)] = (_S.NOT_AUTHENTICATED, (_E.DEAUTHENTICATION,))
TRANSITIONS[(_S.NOT_AUTHENTICATED, MgmtKind.AUTH)] = (_S.AUTHENTICATED, (_E.AUTHENTICATION,))
TRANSITIONS[(_S.AUTHENTICATED, MgmtKind.ASSOC)] = (_S.AUTHORIZED, (_E.ASSOCIATION, _E.AUTHORIZATION))
TRANSITIONS[(_S.AUTHENTICATED, MgmtKind.REASSOC)] = (_S.AUTHORIZED, (_E.REASSOCIATION, _E.AUTHORIZATION))
TRANSITIONS[(_S.ASSOCIATED, MgmtKind.DISASSOC)] = (_S.AUTHENTICATED, (_E.DISASSOCIATION,))
TRANSITIONS[(_S.AUTHORIZED, MgmtKind.DISASSOC)] = (_S.AUTHENTICATED, (_E.DISASSOCIATION,))


@dataclass(frozen=True)
class EtherFrame:
    src: bytes
    dst: bytes
    length_bytes: int
    flow_seq: int = 0
    created_at_us: int = 0

    def __post_init__(self):
        if not 0 < self.length_bytes <= MAX_FRAME_BYTES:
            raise ValueError(f"frame length {self.length_bytes} outside 1..{MAX_FRAME_BYTES}")


@dataclass
class PhysCaps:
    versions: frozenset[Dot11Version] = frozenset(Dot11Version)
    channels: frozenset[int] = frozenset(range(1, 12))
    tx_power_min_dbm: int = 0
    tx_power_max_dbm: int = 20
    security: frozenset[Security] = frozenset(Security)
    max_aps: int = 4

    def to_reply(self, phys_port: int) -> PportCapsReply:
        return PportCapsReply(
            phys_port=phys_port,
            versions_bitmap=sum(1 << v for v in self.versions),
            channels_bitmap=sum(1 << (c - 1) for c in self.channels),
            tx_power_min_dbm=self.tx_power_min_dbm,
            tx_power_max_dbm=self.tx_power_max_dbm,
            security_bitmap=sum(1 << s for s in self.security),
            max_aps=self.max_aps,
        )


@dataclass
class WirelessPhysicalPort:
    port_id: int
    dot11_version: Dot11Version = Dot11Version.N
    channel: int = 1
    tx_power_dbm: int = 20
    caps: PhysCaps = field(default_factory=PhysCaps)


@dataclass
class StationRecord:
    mac: bytes
    state: StationState = StationState.NOT_AUTHENTICATED
    rssi_current_dbm: float | None = None
    rssi_avg_dbm: float | None = None
    associated_since_us: int | None = None
    tx_pkts: int = 0
    rx_pkts: int = 0
    tx_bytes: int = 0
    rx_bytes: int = 0

    def observe_rssi(self, rssi: float) -> None:
        self.rssi_current_dbm = rssi
        if self.rssi_avg_dbm is None:
            self.rssi_avg_dbm = rssi
        else:
            self.rssi_avg_dbm = EWMA_ALPHA * rssi + (1 - EWMA_ALPHA) * self.rssi_avg_dbm


@dataclass
class PortCounters:
    tx_pkts: int = 0
    rx_pkts: int = 0
    tx_bytes: int = 0
    rx_bytes: int = 0
    retries: int = 0
    retry_failures: int = 0


@dataclass
class WirelessLogicalPort:
    port_id: int
    parent_phys: int
    ssid: str
    bssid: bytes
    security: Security = Security.OPEN
    stations: dict[bytes, StationRecord] = field(default_factory=dict)
    counters: PortCounters = field(default_factory=PortCounters)

    def state_of(self, mac: bytes) -> StationState:
        rec = self.stations.get(mac)
        return rec.state if rec else StationState.NOT_AUTHENTICATED


@dataclass
class FrameCounters:
    frames_in: int = 0
    frames_forwarded: int = 0
    frames_dropped: int = 0
    copies_out: int = 0


def _clamp_i8(v: float) -> int:
    return max(-128, min(126, round(v)))


class Datapath:
    """One switch or access point.

    ``clock`` returns the current simulation time in microseconds. Wireless
    events produced by management frames or operations are both returned and
    pushed to every callable in ``event_sinks``.
    """

    def __init__(
        self,
        datapath_id: int,
        name: str = "",
        wired_ports: tuple[int, ...] = (),
        mode: Mode = Mode.SDN,
        clock: Callable[[], int] = lambda: 0,
        bridge_aging_s: float = 300.0,
    ):
        self.datapath_id = datapath_id
        self.name = name or f"dp{datapath_id}"
        self.wired_ports = list(wired_ports)
        self.mode = mode
        self.clock = clock
        self.phys_ports: dict[int, WirelessPhysicalPort] = {}
        self.lports: dict[int, WirelessLogicalPort] = {}
        self.flow_table = FlowTable()
        self.bridge = LearningBridge(self.all_ports, bridge_aging_s)
        self.counters = FrameCounters()
        self.event_sinks: list[Callable[[object], None]] = []
        self.drop_listeners: list[Callable[[int, bytes], None]] = []
        self.config_listeners: list[Callable[[int], None]] = []
        self.log: list[str] = []

    # -- inventory ---------------------------------------------------------

    def all_ports(self) -> list[int]:
        return self.wired_ports + sorted(self.lports)

    @property
    def n_ports(self) -> int:
        return len(self.wired_ports) + len(self.phys_ports)

    @property
    def is_access_point(self) -> bool:
        return bool(self.phys_ports)

    def add_phys_port(self, port: WirelessPhysicalPort) -> WirelessPhysicalPort:
        if port.port_id in self.phys_ports or port.port_id in self.wired_ports:
            raise ValueError(f"port {port.port_id} already exists on {self.name}")
        if port.channel not in port.caps.channels:
            raise ValueError(f"channel {port.channel} not in caps of port {port.port_id}")
        if port.caps.max_aps < 1:
            raise ValueError("max_aps must be at least 1")
        self.phys_ports[port.port_id] = port
        return port

    def lport_phys(self, lport_id: int) -> WirelessPhysicalPort:
        return self.phys_ports[self.lports[lport_id].parent_phys]

    def _lport(self, lport_id: int) -> WirelessLogicalPort:
        try:
            return self.lports[lport_id]
        except KeyError:
            raise WirelessErrorException(WirelessErrorCode.INVALID_LOGICAL_PORT, f"logical port {lport_id}") from None

    def _phys(self, phys_id: int) -> WirelessPhysicalPort:
        try:
            return self.phys_ports[phys_id]
        except KeyError:
            raise WirelessErrorException(WirelessErrorCode.INVALID_PHYS_PORT, f"physical port {phys_id}") from None

    def _emit(self, body) -> None:
        for sink in self.event_sinks:
            sink(body)

    # -- forwarding --------------------------------------------------------

    def process_frame(self, f: EtherFrame, in_port: int, in_phys_port: int | None = None) -> list[int]:
        """Flow-table forwarding. Unmatched frames are dropped."""
        now = self.clock()
        self.counters.frames_in += 1
        self.flow_table.expire(now)
        entry = self.flow_table.lookup(in_port, f.dst)
        if entry is None:
            self.counters.frames_dropped += 1
            return []
        entry.packets += 1
        entry.bytes += f.length_bytes
        entry.last_hit_us = now
        outs = [p for p in entry.out_ports() if p != in_port]
        if not outs:
            self.counters.frames_dropped += 1
            return []
        self.counters.frames_forwarded += 1
        self.counters.copies_out += len(outs)
        return outs

    def bridge_forward(self, f: EtherFrame, in_port: int) -> list[int]:
        self.counters.frames_in += 1
        outs = self.bridge.forward(f.src, f.dst, in_port, self.clock())
        if outs:
            self.counters.frames_forwarded += 1
            self.counters.copies_out += len(outs)
        else:
            self.counters.frames_dropped += 1
        return outs

    def forward(self, f: EtherFrame, in_port: int) -> list[int]:
        if self.mode is Mode.BRIDGE:
            return self.bridge_forward(f, in_port)
        in_phys = self.lports[in_port].parent_phys if in_port in self.lports else in_port
        return self.process_frame(f, in_port, in_phys)

    def apply_flow_mod(self, fm: wire.FlowModBody) -> None:
        self.flow_table.apply(fm, self.clock())

    # -- wireless: station management ---------------------------------------

    def handle_mgmt(self, kind: MgmtKind, sta: bytes, rssi_dbm: float | None, lport: int) -> list:
        """Run one management frame through the station state machine.

        Returns the emitted messages: EventReports in order, or a single
        WirelessError for an out-of-order frame (state left unchanged).
        """
        port = self._lport(lport)
        state = port.state_of(sta)
        step = TRANSITIONS.get((state, kind))
        if step is None:
            text = f"{kind.value} from {wire.mac_to_str(sta)} in state {state.name} on lport {lport}"
            self.log.append(text)
            log.debug("%s: out-of-order %s", self.name, text)
            err = WirelessErrorException(WirelessErrorCode.UNKNOWN_STATION, text).to_body()
            self._emit(err)
            return [err]
        new_state, kinds = step
        now = self.clock()
        if new_state == StationState.NOT_AUTHENTICATED:
            port.stations.pop(sta, None)
        elif new_state != state:
            rec = port.stations.setdefault(sta, StationRecord(sta))
            rec.state = new_state
            if new_state >= StationState.ASSOCIATED and state < StationState.ASSOCIATED:
                rec.associated_since_us = now
            elif new_state < StationState.ASSOCIATED:
                rec.associated_since_us = None
        if rssi_dbm is not None and sta in port.stations:
            port.stations[sta].observe_rssi(rssi_dbm)
        events = []
        for k in kinds:
            rssi = _clamp_i8(rssi_dbm) if (k == _E.PROBE and rssi_dbm is not None) else wire.RSSI_NOT_APPLICABLE
            ev = EventReport(port.parent_phys, lport, k, sta, rssi, now)
            events.append(ev)
            self._emit(ev)
        return events

    def is_deliverable(self, lport: int, sta: bytes) -> bool:
        port = self.lports.get(lport)
        return port is not None and port.state_of(sta) == StationState.AUTHORIZED

    def observe_rssi(self, lport: int, sta: bytes, rssi: float) -> None:
        rec = self.lports[lport].stations.get(sta)
        if rec is not None and rec.state >= StationState.ASSOCIATED:
            rec.observe_rssi(rssi)

    def record_tx(self, lport: int, sta: bytes, nbytes: int) -> None:
        port = self.lports[lport]
        port.counters.tx_pkts += 1
        port.counters.tx_bytes += nbytes
        rec = port.stations.get(sta)
        if rec is not None:
            rec.tx_pkts += 1
            rec.tx_bytes += nbytes

    def record_rx(self, lport: int, sta: bytes, nbytes: int) -> None:
        port = self.lports[lport]
        port.counters.rx_pkts += 1
        port.counters.rx_bytes += nbytes
        rec = port.stations.get(sta)
        if rec is not None:
            rec.rx_pkts += 1
            rec.rx_bytes += nbytes

    def record_retries(self, lport: int, retries: int, failed: bool) -> None:
        c = self.lports[lport].counters
        c.retries += retries
        if failed:
            c.retry_failures += 1

    def drop_station(self, lport: int, sta: bytes) -> EventReport:
        port = self._lport(lport)
        if port.state_of(sta) < StationState.AUTHENTICATED:
            raise WirelessErrorException(WirelessErrorCode.UNKNOWN_STATION, wire.mac_to_str(sta))
        del port.stations[sta]
        ev = EventReport(port.parent_phys, lport, _E.DEAUTHENTICATION, sta, wire.RSSI_NOT_APPLICABLE, self.clock())
        self._emit(ev)
        for listener in self.drop_listeners:
            listener(lport, sta)
        return ev

    # -- statistics / capabilities / configuration ---------------------------

    def collect_lport_stats(self, lport: int) -> LportStatsReply:
        port = self._lport(lport)
        now = self.clock()
        stations = []
        for mac in sorted(port.stations):
            rec = port.stations[mac]
            if rec.state < StationState.ASSOCIATED:
                continue
            cur = wire.RSSI_NOT_APPLICABLE if rec.rssi_current_dbm is None else _clamp_i8(rec.rssi_current_dbm)
            avg = wire.RSSI_NOT_APPLICABLE if rec.rssi_avg_dbm is None else _clamp_i8(rec.rssi_avg_dbm)
            connected_ms = (now - rec.associated_since_us) // 1000
            stations.append(StationStats(mac, cur, avg, connected_ms))
        c = port.counters
        return LportStatsReply(
            lport, c.tx_pkts, c.rx_pkts, c.tx_bytes, c.rx_bytes, c.retries, c.retry_failures, tuple(stations)
        )

    def get_pport_caps(self, phys_port: int) -> PportCapsReply:
        return self._phys(phys_port).caps.to_reply(phys_port)

    def apply_pport_config(self, req: wire.PportConfigRequest) -> None:
        port = self._phys(req.phys_port)
        if req.dot11_version not in port.caps.versions:
            raise WirelessErrorException(WirelessErrorCode.UNSUPPORTED_VERSION, req.dot11_version.name)
        if req.channel not in port.caps.channels:
            raise WirelessErrorException(WirelessErrorCode.INVALID_CHANNEL, str(req.channel))
        tx = max(port.caps.tx_power_min_dbm, min(port.caps.tx_power_max_dbm, req.tx_power_dbm))
        port.dot11_version, port.channel, port.tx_power_dbm = req.dot11_version, req.channel, tx
        for listener in self.config_listeners:
            listener(req.phys_port)

    def _next_lport_id(self) -> int:
        i = LPORT_BASE
        while i in self.lports or i in self.wired_ports or i in self.phys_ports:
            i += 1
        return i

    def apply_lport_config(self, req: wire.LportConfigRequest) -> int:
        if req.op == LportOp.CREATE:
            phys = self._phys(req.phys_port)
            children = sum(1 for p in self.lports.values() if p.parent_phys == req.phys_port)
            if children >= phys.caps.max_aps:
                raise WirelessErrorException(WirelessErrorCode.TOO_MANY_APS, f"max_aps={phys.caps.max_aps}")
            self._check_bssid(req.bssid, None)
            self._check_security(phys, req.security)
            pid = self._next_lport_id()
            self.lports[pid] = WirelessLogicalPort(pid, req.phys_port, req.ssid, req.bssid, req.security)
            return pid
        port = self._lport(req.logical_port)
        if req.op == LportOp.MODIFY:
            self._check_bssid(req.bssid, port.port_id)
            self._check_security(self.phys_ports[port.parent_phys], req.security)
            port.ssid, port.bssid, port.security = req.ssid, req.bssid, req.security
            return port.port_id
        for mac in sorted(port.stations):
            self.drop_station(port.port_id, mac)
        del self.lports[port.port_id]
        return port.port_id

    def _check_bssid(self, bssid: bytes, owner: int | None) -> None:
        for p in self.lports.values():
            if p.bssid == bssid and p.port_id != owner:
                raise WirelessErrorException(WirelessErrorCode.INVALID_LOGICAL_PORT, "duplicate bssid")

    def _check_security(self, phys: WirelessPhysicalPort, sec: Security) -> None:
        if sec not in phys.caps.security:
            raise WirelessErrorException(WirelessErrorCode.UNSUPPORTED_VERSION, f"security {sec.name}")


# OpenFlow error types/codes used by the agent.
OFPET_BAD_REQUEST = 1
OFPBRC_BAD_TYPE = 1
OFPET_FLOW_MOD_FAILED = 5
OFPFMFC_UNKNOWN = 0
OFPFMFC_BAD_MATCH = 9  # not in 1.3's list; used for an Add with no match fields


class _NotARequest(Exception):
    pass


class Agent:
    """Protocol agent: turns received messages into datapath operations.

    ``send`` is called with each outgoing :class:`wire.OfMessage`. Wireless
    events raised by the datapath are forwarded as EventReport /
    WirelessError experimenter messages.
    """

    def __init__(self, dp: Datapath, send: Callable[[wire.OfMessage], None]):
        self.dp = dp
        self.send = send
        self._xid = 0x80000000
        dp.event_sinks.append(self._on_event)

    def _next_xid(self) -> int:
        self._xid += 1
        return self._xid

    def _on_event(self, body) -> None:
        self.send(wire.Experimenter(self._next_xid(), body))

    def receive(self, msg: wire.OfMessage) -> None:
        dp = self.dp
        xid = msg.xid
        if isinstance(msg, wire.Hello):
            self.send(wire.Hello(xid))
        elif isinstance(msg, wire.EchoRequest):
            self.send(wire.EchoReply(xid))
        elif isinstance(msg, wire.FeaturesRequest):
            self.send(wire.FeaturesReply(xid, dp.datapath_id, dp.n_ports))
        elif isinstance(msg, wire.FlowMod):
            try:
                dp.apply_flow_mod(msg.body)
            except FlowModError as exc:
                code = OFPFMFC_BAD_MATCH if exc.kind.value == "EmptyMatch" else OFPFMFC_UNKNOWN
                self.send(wire.Error(xid, OFPET_FLOW_MOD_FAILED, code, wire.encode(msg)[:64]))
        elif isinstance(msg, wire.Experimenter):
            try:
                for reply in self._experimenter(msg.body):
                    self.send(wire.Experimenter(xid, reply))
            except WirelessErrorException as exc:
                self.send(wire.Experimenter(xid, exc.to_body()))
            except _NotARequest:
                self.send(wire.Error(xid, OFPET_BAD_REQUEST, OFPBRC_BAD_TYPE, wire.encode(msg)[:64]))
        else:
            self.send(wire.Error(xid, OFPET_BAD_REQUEST, OFPBRC_BAD_TYPE, wire.encode(msg)[:64]))

    def _experimenter(self, body) -> list:
        dp = self.dp
        if isinstance(body, wire.LportStatsRequest):
            if body.logical_port == wire.PORT_ANY:
                return [dp.collect_lport_stats(p) for p in sorted(dp.lports)]
            return [dp.collect_lport_stats(body.logical_port)]
        if isinstance(body, wire.PportCapsRequest):
            return [dp.get_pport_caps(body.phys_port)]
        if isinstance(body, wire.PportConfigRequest):
            dp.apply_pport_config(body)
            return []
        if isinstance(body, wire.LportConfigRequest):
            pid = dp.apply_lport_config(body)
            # Create/Modify are acknowledged with the port's stats so the
            # controller learns the assigned id.
            return [] if body.op == LportOp.DELETE else [dp.collect_lport_stats(pid)]
        if isinstance(body, wire.DropStation):
            dp.drop_station(body.logical_port, body.sta_mac)
            return []
        raise _NotARequest(type(body).__name__)
