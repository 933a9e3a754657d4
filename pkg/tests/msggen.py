"""Seeded random generators for every wire message kind."""

from __future__ import annotations

import random
import string

from afx import wire

SSID_ALPHABET = string.ascii_letters + string.digits + "-_ ."


def mac(r: random.Random) -> bytes:
    return bytes(r.getrandbits(8) for _ in range(6))


def u(r: random.Random, bits: int) -> int:
    return r.getrandbits(bits)


def i8(r: random.Random) -> int:
    return r.randint(-128, 127)


def blob(r: random.Random, max_len: int = 40) -> bytes:
    return bytes(r.getrandbits(8) for _ in range(r.randint(0, max_len)))


def event_report(r):
    return wire.EventReport(
        u(r, 32), u(r, 32), r.choice(list(wire.WirelessEventKind)), mac(r), i8(r), u(r, 64)
    )


def stats_reply(r):
    stations = tuple(
        wire.StationStats(mac(r), i8(r), i8(r), u(r, 64)) for _ in range(r.randint(0, 5))
    )
    return wire.LportStatsReply(u(r, 32), *(u(r, 64) for _ in range(6)), stations)


def lport_config(r):
    ssid = "".join(r.choice(SSID_ALPHABET) for _ in range(r.randint(0, 32))).rstrip("\0")
    return wire.LportConfigRequest(
        r.choice(list(wire.LportOp)), u(r, 32), u(r, 32), ssid, mac(r), r.choice(list(wire.Security))
    )


BODY_GENERATORS = {
    wire.EventReport: event_report,
    wire.LportStatsRequest: lambda r: wire.LportStatsRequest(u(r, 32)),
    wire.LportStatsReply: stats_reply,
    wire.PportConfigRequest: lambda r: wire.PportConfigRequest(
        u(r, 32), r.choice(list(wire.Dot11Version)), u(r, 8), i8(r)
    ),
    wire.LportConfigRequest: lport_config,
    wire.PportCapsRequest: lambda r: wire.PportCapsRequest(u(r, 32)),
    wire.PportCapsReply: lambda r: wire.PportCapsReply(u(r, 32), u(r, 8), u(r, 16), i8(r), i8(r), u(r, 8), u(r, 8)),
    wire.DropStation: lambda r: wire.DropStation(u(r, 32), mac(r)),
    wire.WirelessError: lambda r: wire.WirelessError(r.choice(list(wire.WirelessErrorCode)), blob(r)),
}


def match(r):
    while True:
        m = wire.MatchSet(
            u(r, 32) if r.random() < 0.5 else None,
            mac(r) if r.random() < 0.7 else None,
        )
        if not m.is_empty() or r.random() < 0.2:
            return m


def flow_mod_body(r):
    return wire.FlowModBody(
        r.choice(list(wire.FlowModCommand)),
        u(r, 16),
        match(r),
        tuple(wire.Output(u(r, 32)) for _ in range(r.randint(0, 4))),
        u(r, 16),
        u(r, 16),
    )


OF_GENERATORS = {
    wire.Hello: lambda r: wire.Hello(u(r, 32)),
    wire.EchoRequest: lambda r: wire.EchoRequest(u(r, 32)),
    wire.EchoReply: lambda r: wire.EchoReply(u(r, 32)),
    wire.FeaturesRequest: lambda r: wire.FeaturesRequest(u(r, 32)),
    wire.FeaturesReply: lambda r: wire.FeaturesReply(u(r, 32), u(r, 64), u(r, 32)),
    wire.FlowMod: lambda r: wire.FlowMod(u(r, 32), flow_mod_body(r)),
    wire.Error: lambda r: wire.Error(u(r, 32), u(r, 16), u(r, 16), blob(r, 64)),
    wire.Experimenter: lambda r: wire.Experimenter(u(r, 32), r.choice(list(BODY_GENERATORS.values()))(r)),
}


def experimenter(r, body_cls):
    return wire.Experimenter(u(r, 32), BODY_GENERATORS[body_cls](r))


def any_message(r):
    return r.choice(list(OF_GENERATORS.values()))(r)
