import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import msggen
from afx import wire
from afx.wire import DecodeErrorKind


def _msg_from_seed(seed):
    return msggen.any_message(random.Random(seed))


def test_hello_bytes_match_hand_layout():
    # version 4, type 0, length 8, xid 1
    assert wire.encode(wire.Hello(1)) == bytes([0x04, 0x00, 0x00, 0x08, 0, 0, 0, 1])


def test_echo_request_round_trip():
    m = wire.EchoRequest(0)
    assert wire.decode(wire.encode(m)) == m


def test_drop_station_reencodes_identically():
    m = wire.Experimenter(9, wire.DropStation(2, wire.mac_from_str("aa:bb:cc:dd:ee:ff")))
    raw = wire.encode(m)
    assert wire.encode(wire.decode(raw)) == raw
    # header 8 + experimenter head 8 + body (4 + 6 -> padded to 16)
    assert len(raw) == 32
    assert raw[16:20] == b"\x00\x00\x00\x02"
    assert raw[20:26] == bytes.fromhex("aabbccddeeff")
    assert raw[26:] == bytes(6)


def test_drop_station_layout_uses_subtype_7():
    raw = wire.encode(wire.Experimenter(1, wire.DropStation(1, bytes(6))))
    exp_id, subtype = struct.unpack_from("!IH", raw, 8)
    assert (exp_id, subtype) == (0xAE7AF100, 7)


def test_decode_hello_xid_7():
    assert wire.decode(wire.encode(wire.Hello(7))) == wire.Hello(7)


def test_header_longer_than_buffer_is_truncated():
    buf = bytes([4, 0, 0, 16, 0, 0, 0, 1])
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(buf)
    assert ei.value.kind is DecodeErrorKind.TRUNCATED


def test_short_header_is_truncated():
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(b"\x04\x00\x00")
    assert ei.value.kind is DecodeErrorKind.TRUNCATED


def test_bad_version_rejected():
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(bytes([1, 0, 0, 8, 0, 0, 0, 1]))
    assert ei.value.kind is DecodeErrorKind.BAD_VERSION
    assert ei.value.field == "version"


def test_unknown_type_never_skipped():
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(bytes([4, 99, 0, 8, 0, 0, 0, 1]))
    assert ei.value.kind is DecodeErrorKind.UNKNOWN_TYPE


def test_unknown_subtype():
    raw = bytearray(wire.encode(wire.Experimenter(3, wire.PportCapsRequest(1))))
    raw[13] = 42
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(bytes(raw))
    assert ei.value.kind is DecodeErrorKind.UNKNOWN_SUBTYPE
    assert not isinstance(ei.value, wire.ForeignExperimenterError)


def test_foreign_experimenter_is_distinguished():
    raw = bytearray(wire.encode(wire.Experimenter(3, wire.PportCapsRequest(1))))
    raw[11] ^= 0x01  # flip one byte of the experimenter id
    with pytest.raises(wire.ForeignExperimenterError) as ei:
        wire.decode(bytes(raw))
    assert ei.value.kind is DecodeErrorKind.UNKNOWN_SUBTYPE
    assert ei.value.experimenter_id == 0xAE7AF101


def test_misaligned_length_is_bad_length():
    raw = wire.encode(wire.Hello(1)) + b"\x00" * 4
    bad = raw[:2] + struct.pack("!H", 12) + raw[4:]
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(bad)
    assert ei.value.kind is DecodeErrorKind.BAD_LENGTH


def test_body_size_mismatch_is_bad_length():
    raw = wire.encode(wire.Experimenter(1, wire.LportStatsRequest(5)))
    longer = raw[:2] + struct.pack("!H", len(raw) + 8) + raw[4:] + bytes(8)
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(longer)
    assert ei.value.kind is DecodeErrorKind.BAD_LENGTH


def test_extra_bytes_after_declared_length_are_not_read():
    # the decoder must act on the declared length only: a trailing message
    # must not change the outcome for a single-message buffer
    one = wire.encode(wire.Hello(5))
    with pytest.raises(wire.DecodeError) as ei:
        wire.decode(one + wire.encode(wire.Hello(6)))
    assert ei.value.kind is DecodeErrorKind.BAD_LENGTH


def test_encode_rejects_oversized_station_list():
    stations = tuple(wire.StationStats(bytes(6), 0, 0, 0) for _ in range(0x10000))
    with pytest.raises(wire.EncodeError):
        wire.encode(wire.Experimenter(1, wire.LportStatsReply(1, stations=stations)))


def test_encode_rejects_out_of_range_field():
    with pytest.raises(wire.EncodeError):
        wire.encode(wire.FeaturesReply(1, 1 << 64, 0))


def test_ssid_is_zero_padded_and_stripped():
    body = wire.LportConfigRequest(wire.LportOp.CREATE, 0, 2, "lab", bytes(6))
    raw = wire.encode(wire.Experimenter(1, body))
    assert b"lab" + bytes(29) in raw
    assert wire.decode(raw).body.ssid == "lab"


def test_ssid_longer_than_32_bytes_rejected():
    body = wire.LportConfigRequest(wire.LportOp.CREATE, 0, 2, "x" * 33, bytes(6))
    with pytest.raises(wire.EncodeError):
        wire.encode(wire.Experimenter(1, body))


def test_rssi_not_applicable_sentinel():
    ev = wire.EventReport(2, 100, wire.WirelessEventKind.ASSOCIATION, bytes(6))
    assert ev.rssi_dbm == 0x7F
    assert wire.decode(wire.encode(wire.Experimenter(1, ev))).body.rssi_dbm == 127


def test_event_kind_wire_values():
    k = wire.WirelessEventKind
    assert [e.value for e in k] == list(range(7))
    assert k.PROBE == 0 and k.REASSOCIATION == 4 and k.DISASSOCIATION == 5 and k.AUTHORIZATION == 6


def test_frame_split_two_messages():
    buf = wire.encode(wire.Hello(1)) + wire.encode(wire.EchoRequest(2))
    msgs, rest = wire.frame_split(buf)
    assert [wire.decode(m) for m in msgs] == [wire.Hello(1), wire.EchoRequest(2)]
    assert rest == b""


def test_frame_split_partial_hello():
    msgs, rest = wire.frame_split(wire.encode(wire.Hello(1))[:5])
    assert msgs == [] and len(rest) == 5


def test_frame_split_corrupt_boundary():
    buf = wire.encode(wire.Hello(1)) + b"\x07" + bytes(7)
    with pytest.raises(wire.DecodeError) as ei:
        wire.frame_split(buf)
    assert ei.value.kind is DecodeErrorKind.BAD_VERSION


def test_thousand_concatenated_messages_resplit():
    r = random.Random(1234)
    msgs = [msggen.any_message(r) for _ in range(1000)]
    stream = b"".join(wire.encode(m) for m in msgs)
    parts, rest = wire.frame_split(stream)
    assert rest == b""
    assert [wire.decode(p) for p in parts] == msgs


def test_dump_format():
    line = wire.dump(wire.Experimenter(12, wire.DropStation(100, wire.mac_from_str("02:00:00:00:01:01"))))
    assert line == "12 DropStation logical_port=100 sta_mac=02:00:00:00:01:01"
    assert wire.dump(wire.Hello(3)) == "3 Hello"


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_round_trip_and_alignment(seed):
    m = _msg_from_seed(seed)
    raw = wire.encode(m)
    assert len(raw) % 8 == 0
    assert struct.unpack_from("!H", raw, 2)[0] == len(raw)
    assert raw[0] == 0x04
    back = wire.decode(raw)
    assert back == m
    assert wire.encode(back) == raw


@settings(max_examples=150, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32),
    st.lists(st.integers(min_value=0, max_value=10_000), max_size=12),
)
def test_frame_reader_invariant_under_chunking(seed, cuts):
    r = random.Random(seed)
    msgs = [msggen.any_message(r) for _ in range(r.randint(1, 20))]
    stream = b"".join(wire.encode(m) for m in msgs)
    points = sorted({c % (len(stream) + 1) for c in cuts})
    reader = wire.FrameReader()
    got = []
    prev = 0
    for p in points + [len(stream)]:
        got += reader.feed(stream[prev:p])
        prev = p
    assert [wire.decode(f) for f in got] == msgs


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=64))
def test_decode_garbage_only_raises_decode_error(buf):
    try:
        wire.decode(buf)
    except wire.DecodeError:
        pass
