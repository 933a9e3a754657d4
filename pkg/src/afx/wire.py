"""OpenFlow 1.3 subset plus the wireless experimenter messages.

Every message is a fixed big-endian record padded with zero bytes to an
8-byte boundary. ``encode`` and ``decode`` are pure and mutually inverse on
valid messages; ``frame_split`` and :class:`FrameReader` cut a byte stream
into whole messages.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, fields
from typing import ClassVar, Union

from . import kernels

OFP_VERSION = 0x04
AETHER_EXPERIMENTER_ID = 0xAE7AF100
RSSI_NOT_APPLICABLE = 0x7F
PORT_ANY = 0xFFFFFFFF
SSID_LEN = 32

_HEADER = struct.Struct("!BBHI")
_U16_MAX = 0xFFFF


class OfType(enum.IntEnum):
    HELLO = 0
    ERROR = 1
    ECHO_REQUEST = 2
    ECHO_REPLY = 3
    EXPERIMENTER = 4
    FEATURES_REQUEST = 5
    FEATURES_REPLY = 6
    FLOW_MOD = 14


class FlowModCommand(enum.IntEnum):
    ADD = 0
    MODIFY = 2
    DELETE_STRICT = 4


class WirelessEventKind(enum.IntEnum):
    PROBE = 0
    AUTHENTICATION = 1
    DEAUTHENTICATION = 2
    ASSOCIATION = 3
    REASSOCIATION = 4
    DISASSOCIATION = 5
    AUTHORIZATION = 6


class Dot11Version(enum.IntEnum):
    B = 0
    G = 1
    N = 2


class Security(enum.IntEnum):
    OPEN = 0
    WPA2PSK = 1


class LportOp(enum.IntEnum):
    CREATE = 0
    MODIFY = 1
    DELETE = 2


class WirelessErrorCode(enum.IntEnum):
    INVALID_CHANNEL = 0
    INVALID_PHYS_PORT = 1
    INVALID_LOGICAL_PORT = 2
    TOO_MANY_APS = 3
    UNKNOWN_STATION = 4
    UNSUPPORTED_VERSION = 5


class DecodeErrorKind(enum.Enum):
    TRUNCATED = "Truncated"
    BAD_VERSION = "BadVersion"
    UNKNOWN_TYPE = "UnknownType"
    UNKNOWN_SUBTYPE = "UnknownSubtype"
    BAD_LENGTH = "BadLength"
    BAD_VALUE = "BadValue"


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    """Raised when a buffer is not a valid message.

    ``kind`` classifies the failure and ``field`` names the offending field.
    """

    def __init__(self, kind: DecodeErrorKind, field: str, detail: str = ""):
        self.kind = kind
        self.field = field
        msg = f"{kind.value}: {field}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ForeignExperimenterError(DecodeError):
    """An experimenter message from some other vendor extension."""

    def __init__(self, experimenter_id: int):
        self.experimenter_id = experimenter_id
        super().__init__(DecodeErrorKind.UNKNOWN_SUBTYPE, "experimenter_id", f"foreign id {experimenter_id:#010x}")


# -- MAC helpers -------------------------------------------------------------


def mac_from_str(text: str) -> bytes:
    parts = text.replace("-", ":").split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    return bytes(int(p, 16) for p in parts)


def mac_to_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def _pad8(n: int) -> int:
    return (n + 7) & ~7


def _padded(data: bytes) -> bytes:
    return data + bytes(_pad8(len(data)) - len(data))


# -- OpenFlow subset ---------------------------------------------------------


@dataclass(frozen=True)
class MatchSet:
    in_port: int | None = None
    eth_dst: bytes | None = None

    def is_empty(self) -> bool:
        return self.in_port is None and self.eth_dst is None


@dataclass(frozen=True)
class Output:
    port: int


Action = Output


@dataclass(frozen=True)
class FlowModBody:
    command: FlowModCommand
    priority: int
    match: MatchSet
    actions: tuple[Action, ...] = ()
    idle_timeout_s: int = 0
    hard_timeout_s: int = 0


@dataclass(frozen=True)
class OfMessage:
    xid: int = 0
    TYPE: ClassVar[OfType]


@dataclass(frozen=True)
class Hello(OfMessage):
    TYPE: ClassVar[OfType] = OfType.HELLO


@dataclass(frozen=True)
class EchoRequest(OfMessage):
    TYPE: ClassVar[OfType] = OfType.ECHO_REQUEST


@dataclass(frozen=True)
class EchoReply(OfMessage):
    TYPE: ClassVar[OfType] = OfType.ECHO_REPLY


@dataclass(frozen=True)
class FeaturesRequest(OfMessage):
    TYPE: ClassVar[OfType] = OfType.FEATURES_REQUEST


@dataclass(frozen=True)
class FeaturesReply(OfMessage):
    datapath_id: int = 0
    n_ports: int = 0
    TYPE: ClassVar[OfType] = OfType.FEATURES_REPLY


@dataclass(frozen=True)
class FlowMod(OfMessage):
    body: FlowModBody = None  # type: ignore[assignment]
    TYPE: ClassVar[OfType] = OfType.FLOW_MOD


@dataclass(frozen=True)
class Error(OfMessage):
    of_type: int = 0
    of_code: int = 0
    data: bytes = b""
    TYPE: ClassVar[OfType] = OfType.ERROR


@dataclass(frozen=True)
class Experimenter(OfMessage):
    body: AetherBody = None  # type: ignore[assignment]
    TYPE: ClassVar[OfType] = OfType.EXPERIMENTER


# -- wireless experimenter bodies --------------------------------------------


@dataclass(frozen=True)
class EventReport:
    SUBTYPE: ClassVar[int] = 0
    phys_port: int
    logical_port: int
    event: WirelessEventKind
    sta_mac: bytes
    rssi_dbm: int = RSSI_NOT_APPLICABLE
    timestamp_us: int = 0


@dataclass(frozen=True)
class LportStatsRequest:
    SUBTYPE: ClassVar[int] = 1
    logical_port: int


@dataclass(frozen=True)
class StationStats:
    mac: bytes
    rssi_current_dbm: int
    rssi_avg_dbm: int
    connected_ms: int


@dataclass(frozen=True)
class LportStatsReply:
    SUBTYPE: ClassVar[int] = 2
    logical_port: int
    tx_pkts: int = 0
    rx_pkts: int = 0
    tx_bytes: int = 0
    rx_bytes: int = 0
    retries: int = 0
    retry_failures: int = 0
    stations: tuple[StationStats, ...] = ()


@dataclass(frozen=True)
class PportConfigRequest:
    SUBTYPE: ClassVar[int] = 3
    phys_port: int
    dot11_version: Dot11Version
    channel: int
    tx_power_dbm: int


@dataclass(frozen=True)
class LportConfigRequest:
    SUBTYPE: ClassVar[int] = 4
    op: LportOp
    logical_port: int
    phys_port: int
    ssid: str
    bssid: bytes
    security: Security = Security.OPEN


@dataclass(frozen=True)
class PportCapsRequest:
    SUBTYPE: ClassVar[int] = 5
    phys_port: int


@dataclass(frozen=True)
class PportCapsReply:
    SUBTYPE: ClassVar[int] = 6
    phys_port: int
    versions_bitmap: int
    channels_bitmap: int
    tx_power_min_dbm: int
    tx_power_max_dbm: int
    security_bitmap: int
    max_aps: int


@dataclass(frozen=True)
class DropStation:
    SUBTYPE: ClassVar[int] = 7
    logical_port: int
    sta_mac: bytes


@dataclass(frozen=True)
class WirelessError:
    SUBTYPE: ClassVar[int] = 8
    code: WirelessErrorCode
    detail: bytes = b""


AetherBody = Union[
    EventReport,
    LportStatsRequest,
    LportStatsReply,
    PportConfigRequest,
    LportConfigRequest,
    PportCapsRequest,
    PportCapsReply,
    DropStation,
    WirelessError,
]

AETHER_BODIES: tuple[type, ...] = (
    EventReport,
    LportStatsRequest,
    LportStatsReply,
    PportConfigRequest,
    LportConfigRequest,
    PportCapsRequest,
    PportCapsReply,
    DropStation,
    WirelessError,
)


class WirelessErrorException(Exception):
    """Carries a :class:`WirelessError` body raised by a data-plane operation."""

    def __init__(self, code: WirelessErrorCode, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code.name}: {detail}" if detail else code.name)

    def to_body(self) -> WirelessError:
        return WirelessError(self.code, self.detail.encode()[:_U16_MAX])


# -- body layouts ------------------------------------------------------------

_EVENT = struct.Struct("!IIBb6sQ")
_U32_PAD4 = struct.Struct("!I4x")
_STATS_HEAD = struct.Struct("!IH2x6Q")
_STATION = struct.Struct("!6sbbQ")
_PPORT_CFG = struct.Struct("!IBBbx")
_LPORT_CFG = struct.Struct("!BB6sII32s")
_CAPS = struct.Struct("!IBBHbbB5x")
_DROP = struct.Struct("!I6s6x")
_WERR = struct.Struct("!HH4x")
_EXP_HEAD = struct.Struct("!IH2x")
_FEATURES = struct.Struct("!QI4x")
_FLOWMOD = struct.Struct("!BBHHHI6sH4x")
_ACTION = struct.Struct("!HHI")
_ERROR = struct.Struct("!HHH2x")

_MATCH_IN_PORT = 0x01
_MATCH_ETH_DST = 0x02
_ACTION_OUTPUT = 0


def _check_u16_len(name: str, n: int) -> None:
    if n > _U16_MAX:
        raise EncodeError(f"{name} has {n} entries; exceeds 16-bit length field")


def _encode_body(body: AetherBody) -> bytes:
    if isinstance(body, EventReport):
        return _EVENT.pack(body.phys_port, body.logical_port, body.event, body.rssi_dbm, body.sta_mac, body.timestamp_us)
    if isinstance(body, LportStatsRequest):
        return _U32_PAD4.pack(body.logical_port)
    if isinstance(body, LportStatsReply):
        _check_u16_len("stations", len(body.stations))
        head = _STATS_HEAD.pack(
            body.logical_port,
            len(body.stations),
            body.tx_pkts,
            body.rx_pkts,
            body.tx_bytes,
            body.rx_bytes,
            body.retries,
            body.retry_failures,
        )
        return head + b"".join(
            _STATION.pack(s.mac, s.rssi_current_dbm, s.rssi_avg_dbm, s.connected_ms) for s in body.stations
        )
    if isinstance(body, PportConfigRequest):
        return _PPORT_CFG.pack(body.phys_port, body.dot11_version, body.channel, body.tx_power_dbm)
    if isinstance(body, LportConfigRequest):
        ssid = body.ssid.encode()
        if len(ssid) > SSID_LEN:
            raise EncodeError(f"ssid longer than {SSID_LEN} bytes")
        return _LPORT_CFG.pack(body.op, body.security, body.bssid, body.logical_port, body.phys_port, ssid)
    if isinstance(body, PportCapsRequest):
        return _U32_PAD4.pack(body.phys_port)
    if isinstance(body, PportCapsReply):
        return _CAPS.pack(
            body.phys_port,
            body.versions_bitmap,
            body.security_bitmap,
            body.channels_bitmap,
            body.tx_power_min_dbm,
            body.tx_power_max_dbm,
            body.max_aps,
        )
    if isinstance(body, DropStation):
        return _DROP.pack(body.logical_port, body.sta_mac)
    if isinstance(body, WirelessError):
        _check_u16_len("detail", len(body.detail))
        return _padded(_WERR.pack(body.code, len(body.detail)) + body.detail)
    raise EncodeError(f"not a wireless message body: {body!r}")


def _encode_payload(msg: OfMessage) -> bytes:
    if isinstance(msg, (Hello, EchoRequest, EchoReply, FeaturesRequest)):
        return b""
    if isinstance(msg, FeaturesReply):
        return _FEATURES.pack(msg.datapath_id, msg.n_ports)
    if isinstance(msg, FlowMod):
        fm = msg.body
        _check_u16_len("actions", len(fm.actions))
        flags = 0
        if fm.match.in_port is not None:
            flags |= _MATCH_IN_PORT
        if fm.match.eth_dst is not None:
            flags |= _MATCH_ETH_DST
        head = _FLOWMOD.pack(
            fm.command,
            flags,
            fm.priority,
            fm.idle_timeout_s,
            fm.hard_timeout_s,
            fm.match.in_port or 0,
            fm.match.eth_dst or bytes(6),
            len(fm.actions),
        )
        return head + b"".join(_ACTION.pack(_ACTION_OUTPUT, _ACTION.size, a.port) for a in fm.actions)
    if isinstance(msg, Error):
        _check_u16_len("data", len(msg.data))
        return _padded(_ERROR.pack(msg.of_type, msg.of_code, len(msg.data)) + msg.data)
    if isinstance(msg, Experimenter):
        return _EXP_HEAD.pack(AETHER_EXPERIMENTER_ID, msg.body.SUBTYPE) + _encode_body(msg.body)
    raise EncodeError(f"cannot encode {msg!r}")


def encode(msg: OfMessage) -> bytes:
    """Serialize ``msg`` to its wire bytes."""
    try:
        payload = _encode_payload(msg)
        total = 8 + len(payload)
        if total > _U16_MAX:
            raise EncodeError(f"message length {total} exceeds 16-bit length field")
        return _HEADER.pack(OFP_VERSION, msg.TYPE, total, msg.xid) + payload
    except struct.error as exc:
        raise EncodeError(str(exc)) from exc


# -- decoding ----------------------------------------------------------------


def _enum(cls, value, name):
    try:
        return cls(value)
    except ValueError:
        raise DecodeError(DecodeErrorKind.BAD_VALUE, name, f"{value}") from None


def _need(buf: bytes, size: int, name: str) -> None:
    if len(buf) < size:
        raise DecodeError(DecodeErrorKind.BAD_LENGTH, name, f"need {size} bytes, have {len(buf)}")


def _exact(buf: bytes, size: int, name: str) -> None:
    if len(buf) != _pad8(size):
        raise DecodeError(DecodeErrorKind.BAD_LENGTH, name, f"expected {_pad8(size)} bytes, have {len(buf)}")


def _decode_body(subtype: int, b: bytes) -> AetherBody:
    if subtype == 0:
        _exact(b, _EVENT.size, "EventReport")
        phys, lport, ev, rssi, mac, ts = _EVENT.unpack(b)
        return EventReport(phys, lport, _enum(WirelessEventKind, ev, "event"), mac, rssi, ts)
    if subtype == 1:
        _exact(b, _U32_PAD4.size, "LportStatsRequest")
        return LportStatsRequest(*_U32_PAD4.unpack(b))
    if subtype == 2:
        _need(b, _STATS_HEAD.size, "LportStatsReply")
        lport, n, *counters = _STATS_HEAD.unpack_from(b)
        _exact(b, _STATS_HEAD.size + n * _STATION.size, "stations")
        stations = tuple(
            StationStats(*_STATION.unpack_from(b, _STATS_HEAD.size + i * _STATION.size)) for i in range(n)
        )
        return LportStatsReply(lport, *counters, stations=stations)
    if subtype == 3:
        _exact(b, _PPORT_CFG.size, "PportConfigRequest")
        phys, ver, ch, txp = _PPORT_CFG.unpack(b)
        return PportConfigRequest(phys, _enum(Dot11Version, ver, "dot11_version"), ch, txp)
    if subtype == 4:
        _exact(b, _LPORT_CFG.size, "LportConfigRequest")
        op, sec, bssid, lport, phys, ssid = _LPORT_CFG.unpack(b)
        try:
            ssid_text = ssid.rstrip(b"\x00").decode()
        except UnicodeDecodeError:
            raise DecodeError(DecodeErrorKind.BAD_VALUE, "ssid", "not UTF-8") from None
        return LportConfigRequest(
            _enum(LportOp, op, "op"), lport, phys, ssid_text, bssid, _enum(Security, sec, "security")
        )
    if subtype == 5:
        _exact(b, _U32_PAD4.size, "PportCapsRequest")
        return PportCapsRequest(*_U32_PAD4.unpack(b))
    if subtype == 6:
        _exact(b, _CAPS.size, "PportCapsReply")
        phys, vers, sec, chans, txmin, txmax, max_aps = _CAPS.unpack(b)
        return PportCapsReply(phys, vers, chans, txmin, txmax, sec, max_aps)
    if subtype == 7:
        _exact(b, _DROP.size, "DropStation")
        return DropStation(*_DROP.unpack(b))
    if subtype == 8:
        _need(b, _WERR.size, "WirelessError")
        code, n = _WERR.unpack_from(b)
        _exact(b, _WERR.size + n, "detail")
        return WirelessError(_enum(WirelessErrorCode, code, "code"), bytes(b[_WERR.size : _WERR.size + n]))
    raise DecodeError(DecodeErrorKind.UNKNOWN_SUBTYPE, "subtype", str(subtype))


def _decode_flow_mod(xid: int, b: bytes) -> FlowMod:
    _need(b, _FLOWMOD.size, "FlowMod")
    cmd, flags, prio, idle, hard, in_port, eth_dst, n = _FLOWMOD.unpack_from(b)
    _exact(b, _FLOWMOD.size + n * _ACTION.size, "actions")
    actions = []
    for i in range(n):
        atype, alen, port = _ACTION.unpack_from(b, _FLOWMOD.size + i * _ACTION.size)
        if atype != _ACTION_OUTPUT or alen != _ACTION.size:
            raise DecodeError(DecodeErrorKind.BAD_VALUE, "action.type", str(atype))
        actions.append(Output(port))
    match = MatchSet(
        in_port if flags & _MATCH_IN_PORT else None,
        eth_dst if flags & _MATCH_ETH_DST else None,
    )
    body = FlowModBody(_enum(FlowModCommand, cmd, "command"), prio, match, tuple(actions), idle, hard)
    return FlowMod(xid, body)


def decode(buf: bytes) -> OfMessage:
    """Parse exactly one message from ``buf``."""
    if len(buf) < 1:
        raise DecodeError(DecodeErrorKind.TRUNCATED, "header")
    if buf[0] != OFP_VERSION:
        raise DecodeError(DecodeErrorKind.BAD_VERSION, "version", f"{buf[0]:#04x}")
    if len(buf) < _HEADER.size:
        raise DecodeError(DecodeErrorKind.TRUNCATED, "header", f"{len(buf)} bytes")
    _, mtype, length, xid = _HEADER.unpack_from(buf)
    if length < _HEADER.size or length % 8:
        raise DecodeError(DecodeErrorKind.BAD_LENGTH, "length", str(length))
    if len(buf) < length:
        raise DecodeError(DecodeErrorKind.TRUNCATED, "length", f"header says {length}, have {len(buf)}")
    if len(buf) > length:
        raise DecodeError(DecodeErrorKind.BAD_LENGTH, "length", f"header says {length}, have {len(buf)}")
    body = bytes(buf[_HEADER.size : length])
    try:
        mtype = OfType(mtype)
    except ValueError:
        raise DecodeError(DecodeErrorKind.UNKNOWN_TYPE, "msg_type", str(mtype)) from None

    if mtype in (OfType.HELLO, OfType.ECHO_REQUEST, OfType.ECHO_REPLY, OfType.FEATURES_REQUEST):
        _exact(body, 0, mtype.name)
        return {
            OfType.HELLO: Hello,
            OfType.ECHO_REQUEST: EchoRequest,
            OfType.ECHO_REPLY: EchoReply,
            OfType.FEATURES_REQUEST: FeaturesRequest,
        }[mtype](xid)
    if mtype == OfType.FEATURES_REPLY:
        _exact(body, _FEATURES.size, "FeaturesReply")
        dpid, n_ports = _FEATURES.unpack(body)
        return FeaturesReply(xid, dpid, n_ports)
    if mtype == OfType.FLOW_MOD:
        return _decode_flow_mod(xid, body)
    if mtype == OfType.ERROR:
        _need(body, _ERROR.size, "Error")
        t, c, n = _ERROR.unpack_from(body)
        _exact(body, _ERROR.size + n, "data")
        return Error(xid, t, c, body[_ERROR.size : _ERROR.size + n])
    # experimenter
    _need(body, _EXP_HEAD.size, "Experimenter")
    exp_id, subtype = _EXP_HEAD.unpack_from(body)
    if exp_id != AETHER_EXPERIMENTER_ID:
        raise ForeignExperimenterError(exp_id)
    return Experimenter(xid, _decode_body(subtype, body[_EXP_HEAD.size :]))


# -- stream framing ----------------------------------------------------------


def frame_split(stream_buffer: bytes) -> tuple[list[bytes], bytes]:
    """Split a byte stream into complete messages and a trailing remainder."""
    ends, consumed, status = kernels.scan_frames(stream_buffer)
    if status == kernels.SCAN_BAD_VERSION:
        raise DecodeError(DecodeErrorKind.BAD_VERSION, "version", f"at offset {consumed}")
    if status == kernels.SCAN_BAD_LENGTH:
        raise DecodeError(DecodeErrorKind.BAD_LENGTH, "length", f"at offset {consumed}")
    view = bytes(stream_buffer)
    out = []
    start = 0
    for end in ends:
        out.append(view[start:end])
        start = end
    return out, view[consumed:]


class FrameReader:
    """Incremental framer: feed arbitrary chunks, get whole messages back."""

    def __init__(self) -> None:
        self._buf = b""

    def feed(self, chunk: bytes) -> list[bytes]:
        msgs, self._buf = frame_split(self._buf + chunk)
        return msgs

    @property
    def pending(self) -> int:
        return len(self._buf)


# -- human-readable dump -----------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, enum.Enum):
        return value.name
    if isinstance(value, bytes):
        return mac_to_str(value) if len(value) == 6 else value.hex()
    if isinstance(value, (tuple, list)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, MatchSet):
        parts = []
        if value.in_port is not None:
            parts.append(f"in_port:{value.in_port}")
        if value.eth_dst is not None:
            parts.append(f"eth_dst:{mac_to_str(value.eth_dst)}")
        return "{" + ",".join(parts) + "}"
    if isinstance(value, Output):
        return f"output:{value.port}"
    if isinstance(value, StationStats):
        return "{" + ",".join(f"{f.name}:{_fmt(getattr(value, f.name))}" for f in fields(value)) + "}"
    return str(value)


def dump(msg: OfMessage) -> str:
    """One line: ``<xid> <TYPE> key=value ...``."""
    if isinstance(msg, Experimenter):
        name, target = type(msg.body).__name__, msg.body
    elif isinstance(msg, FlowMod):
        name, target = "FlowMod", msg.body
    else:
        name, target = type(msg).__name__, msg
    parts = [str(msg.xid), name]
    for f in fields(target):
        if f.name == "xid":
            continue
        parts.append(f"{f.name}={_fmt(getattr(target, f.name))}")
    return " ".join(parts)
