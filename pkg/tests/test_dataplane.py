import itertools

import pytest

from afx import wire
from afx.dataplane import Agent, Datapath, MgmtKind, PhysCaps, StationState, WirelessPhysicalPort
from afx.radio import RadioAP, RadioWorld, MobilityPlan, StationAgent, Delivered, Failed
from afx.wire import (
    Dot11Version,
    LportConfigRequest,
    LportOp,
    PportConfigRequest,
    Security,
    WirelessErrorCode,
    WirelessErrorException,
    WirelessEventKind as E,
)

STA = bytes.fromhex("020000000101")
STA2 = bytes.fromhex("020000000102")
NA, AU, AS, AZ = (StationState.NOT_AUTHENTICATED, StationState.AUTHENTICATED, StationState.ASSOCIATED, StationState.AUTHORIZED)

# The open-authentication table written out by hand: (state, frame) -> (next, events).
EXPECTED = {
    (NA, MgmtKind.PROBE): (NA, [E.PROBE]),
    (AU, MgmtKind.PROBE): (AU, [E.PROBE]),
    (AS, MgmtKind.PROBE): (AS, [E.PROBE]),
    (AZ, MgmtKind.PROBE): (AZ, [E.PROBE]),
    (NA, MgmtKind.AUTH): (AU, [E.AUTHENTICATION]),
    (AU, MgmtKind.ASSOC): (AZ, [E.ASSOCIATION, E.AUTHORIZATION]),
    (AU, MgmtKind.REASSOC): (AZ, [E.REASSOCIATION, E.AUTHORIZATION]),
    (AS, MgmtKind.DISASSOC): (AU, [E.DISASSOCIATION]),
    (AZ, MgmtKind.DISASSOC): (AU, [E.DISASSOCIATION]),
    (AU, MgmtKind.DEAUTH): (NA, [E.DEAUTHENTICATION]),
    (AS, MgmtKind.DEAUTH): (NA, [E.DEAUTHENTICATION]),
    (AZ, MgmtKind.DEAUTH): (NA, [E.DEAUTHENTICATION]),
}


class Clock:
    def __init__(self):
        self.t = 0

    def __call__(self):
        return self.t


def make_ap(clock=None, max_aps=4, caps=None):
    dp = Datapath(2, "ap", wired_ports=(1,), clock=clock or (lambda: 0))
    dp.add_phys_port(WirelessPhysicalPort(2, caps=caps or PhysCaps(max_aps=max_aps)))
    lport = dp.apply_lport_config(LportConfigRequest(LportOp.CREATE, 0, 2, "lab", bytes.fromhex("02000000aa01")))
    return dp, lport


def force_state(dp, lport, mac, state):
    path = {
        NA: [],
        AU: [MgmtKind.AUTH],
        AS: [MgmtKind.AUTH, MgmtKind.ASSOC],
        AZ: [MgmtKind.AUTH, MgmtKind.ASSOC],
    }[state]
    for k in path:
        dp.handle_mgmt(k, mac, None, lport)
    if state is AS:
        dp.lports[lport].stations[mac].state = AS
    assert dp.lports[lport].state_of(mac) == state


def test_exhaustive_transition_table():
    for state, kind in itertools.product(StationState, MgmtKind):
        dp, lport = make_ap()
        force_state(dp, lport, STA, state)
        out = dp.handle_mgmt(kind, STA, -50.0, lport)
        after = dp.lports[lport].state_of(STA)
        if (state, kind) in EXPECTED:
            nxt, events = EXPECTED[(state, kind)]
            assert after == nxt, (state, kind)
            assert [ev.event for ev in out] == events, (state, kind)
        else:
            assert after == state, (state, kind)
            assert len(out) == 1 and isinstance(out[0], wire.WirelessError)
            assert out[0].code is WirelessErrorCode.UNKNOWN_STATION


def test_canonical_join_event_order():
    dp, lport = make_ap()
    seen = []
    dp.event_sinks.append(seen.append)
    for k in (MgmtKind.PROBE, MgmtKind.AUTH, MgmtKind.ASSOC):
        dp.handle_mgmt(k, STA, -55.0, lport)
    assert [e.event for e in seen] == [E.PROBE, E.AUTHENTICATION, E.ASSOCIATION, E.AUTHORIZATION]
    assert seen[0].rssi_dbm == -55
    assert all(e.rssi_dbm == wire.RSSI_NOT_APPLICABLE for e in seen[1:])


def test_deauth_unknown_mac_leaves_state_and_logs():
    dp, lport = make_ap()
    out = dp.handle_mgmt(MgmtKind.DEAUTH, STA, None, lport)
    assert isinstance(out[0], wire.WirelessError)
    assert dp.lports[lport].stations == {}
    assert dp.log


def test_drop_associated_station():
    dp, lport = make_ap()
    force_state(dp, lport, STA, AZ)
    ev = dp.drop_station(lport, STA)
    assert ev.event is E.DEAUTHENTICATION
    assert dp.lports[lport].state_of(STA) == NA


def test_drop_absent_station_is_unknown_station():
    dp, lport = make_ap()
    with pytest.raises(WirelessErrorException) as ei:
        dp.drop_station(lport, STA)
    assert ei.value.code is WirelessErrorCode.UNKNOWN_STATION


def test_stats_no_longer_list_dropped_station():
    dp, lport = make_ap()
    force_state(dp, lport, STA, AZ)
    assert [s.mac for s in dp.collect_lport_stats(lport).stations] == [STA]
    dp.drop_station(lport, STA)
    assert dp.collect_lport_stats(lport).stations == ()


def test_fresh_ap_stats_are_zero():
    dp, lport = make_ap()
    s = dp.collect_lport_stats(lport)
    assert (s.tx_pkts, s.rx_pkts, s.tx_bytes, s.rx_bytes, s.retries, s.retry_failures) == (0,) * 6
    assert s.stations == ()


def test_stats_count_delivered_frames():
    dp, lport = make_ap()
    force_state(dp, lport, STA, AZ)
    for _ in range(7):
        dp.record_tx(lport, STA, 1512)
    s = dp.collect_lport_stats(lport)
    assert (s.tx_pkts, s.tx_bytes) == (7, 7 * 1512)


def test_connected_ms_is_time_since_association():
    clock = Clock()
    dp, lport = make_ap(clock)
    force_state(dp, lport, STA, AZ)
    clock.t = 3_000_000
    assert dp.collect_lport_stats(lport).stations[0].connected_ms == 3000


def test_stats_on_unknown_lport():
    dp, _ = make_ap()
    with pytest.raises(WirelessErrorException) as ei:
        dp.collect_lport_stats(999)
    assert ei.value.code is WirelessErrorCode.INVALID_LOGICAL_PORT


def test_rssi_average_is_ewma():
    dp, lport = make_ap()
    force_state(dp, lport, STA, AZ)
    for v in (-60.0, -70.0, -80.0):
        dp.observe_rssi(lport, STA, v)
    rec = dp.lports[lport].stations[STA]
    # -60 -> 0.3*-70 + 0.7*-60 = -63 -> 0.3*-80 + 0.7*-63 = -68.1
    assert rec.rssi_current_dbm == -80.0
    assert rec.rssi_avg_dbm == pytest.approx(-68.1)


def test_pport_config_channel_and_errors():
    dp, _ = make_ap()
    dp.apply_pport_config(PportConfigRequest(2, Dot11Version.G, 6, 15))
    p = dp.phys_ports[2]
    assert (p.dot11_version, p.channel, p.tx_power_dbm) == (Dot11Version.G, 6, 15)
    with pytest.raises(WirelessErrorException) as ei:
        dp.apply_pport_config(PportConfigRequest(2, Dot11Version.N, 14, 15))
    assert ei.value.code is WirelessErrorCode.INVALID_CHANNEL
    assert p.channel == 6  # failed request changed nothing
    with pytest.raises(WirelessErrorException) as ei:
        dp.apply_pport_config(PportConfigRequest(9, Dot11Version.N, 1, 15))
    assert ei.value.code is WirelessErrorCode.INVALID_PHYS_PORT


def test_pport_config_unsupported_version():
    dp, _ = make_ap(caps=PhysCaps(versions=frozenset({Dot11Version.N})))
    with pytest.raises(WirelessErrorException) as ei:
        dp.apply_pport_config(PportConfigRequest(2, Dot11Version.B, 1, 10))
    assert ei.value.code is WirelessErrorCode.UNSUPPORTED_VERSION


def test_lower_tx_power_lowers_rssi_exactly():
    dp, lport = make_ap()
    world = RadioWorld(noise=False)
    ap = world.add_ap(RadioAP("ap1", dp, lport, (0.0, 0.0)))
    before = world.rssi_at(ap, (12.0, 5.0))
    dp.apply_pport_config(PportConfigRequest(2, Dot11Version.N, 1, 10))
    assert world.rssi_at(ap, (12.0, 5.0)) == pytest.approx(before - 10.0, abs=1e-12)


def test_create_beyond_max_aps():
    dp, _ = make_ap(max_aps=1)
    with pytest.raises(WirelessErrorException) as ei:
        dp.apply_lport_config(LportConfigRequest(LportOp.CREATE, 0, 2, "b", bytes.fromhex("02000000aa02")))
    assert ei.value.code is WirelessErrorCode.TOO_MANY_APS


def test_create_allocates_next_free_id_and_rejects_duplicate_bssid():
    dp, first = make_ap()
    second = dp.apply_lport_config(LportConfigRequest(LportOp.CREATE, 0, 2, "b", bytes.fromhex("02000000aa02")))
    assert second == first + 1
    with pytest.raises(WirelessErrorException) as ei:
        dp.apply_lport_config(LportConfigRequest(LportOp.CREATE, 0, 2, "c", bytes.fromhex("02000000aa02")))
    assert ei.value.code is WirelessErrorCode.INVALID_LOGICAL_PORT


def test_delete_ap_deauthenticates_each_station_first():
    dp, lport = make_ap()
    force_state(dp, lport, STA, AZ)
    force_state(dp, lport, STA2, AZ)
    seen = []
    dp.event_sinks.append(seen.append)
    dp.apply_lport_config(LportConfigRequest(LportOp.DELETE, lport, 2, "", bytes(6)))
    assert [e.event for e in seen] == [E.DEAUTHENTICATION] * 2
    assert lport not in dp.lports


def test_modify_and_delete_of_absent_lport():
    dp, _ = make_ap()
    for op in (LportOp.MODIFY, LportOp.DELETE):
        with pytest.raises(WirelessErrorException) as ei:
            dp.apply_lport_config(LportConfigRequest(op, 555, 2, "x", bytes(6)))
        assert ei.value.code is WirelessErrorCode.INVALID_LOGICAL_PORT


def test_modify_ssid_changes_what_probes_see():
    dp, lport = make_ap()
    world = RadioWorld(noise=False)
    ap = world.add_ap(RadioAP("ap1", dp, lport, (0.0, 0.0)))
    world.add_station(StationAgent(STA, "renamed", MobilityPlan.stationary((3.0, 0.0))))
    world.step(10_000)
    assert world.stations[STA].pending is None  # nothing advertises "renamed"
    dp.apply_lport_config(LportConfigRequest(LportOp.MODIFY, lport, 2, "renamed", bytes.fromhex("02000000aa01")))
    assert ap.ssid == "renamed"
    world.step(10_000)
    world.step(600_000)
    assert world.stations[STA].pending is not None or world.stations[STA].serving is ap


def test_wpa2_lport_rejected_when_unsupported():
    dp, _ = make_ap(caps=PhysCaps(security=frozenset({Security.OPEN})))
    with pytest.raises(WirelessErrorException):
        dp.apply_lport_config(
            LportConfigRequest(LportOp.CREATE, 0, 2, "s", bytes.fromhex("02000000aa09"), Security.WPA2PSK)
        )


def test_default_caps_reply():
    dp, _ = make_ap()
    c = dp.get_pport_caps(2)
    assert c.versions_bitmap == 0b111
    assert c.channels_bitmap == (1 << 11) - 1
    assert c.max_aps == 4
    assert wire.encode(wire.Experimenter(1, c)) == wire.encode(wire.Experimenter(1, dp.get_pport_caps(2)))
    with pytest.raises(WirelessErrorException) as ei:
        dp.get_pport_caps(1)
    assert ei.value.code is WirelessErrorCode.INVALID_PHYS_PORT


def test_dropped_station_gets_no_deliveries_until_reassociation():
    dp, lport = make_ap()
    world = RadioWorld(noise=False)
    ap = world.add_ap(RadioAP("ap1", dp, lport, (0.0, 0.0)))
    world.add_station(StationAgent(STA, "lab", MobilityPlan.stationary((5.0, 0.0))))
    for _ in range(40):
        world.step(10_000)
    from afx.dataplane import EtherFrame

    f = EtherFrame(bytes(6), STA, 100)
    assert isinstance(world.deliver_wireless(ap, STA, f), Delivered)
    dp.drop_station(lport, STA)
    assert world.deliver_wireless(ap, STA, f) == Failed(0)
    for _ in range(60):
        world.step(10_000)
    assert isinstance(world.deliver_wireless(ap, STA, f), Delivered)


# -- agent -------------------------------------------------------------------


def agent_for(dp):
    sent = []
    return Agent(dp, sent.append), sent


def test_agent_answers_handshake_messages():
    dp, _ = make_ap()
    agent, sent = agent_for(dp)
    agent.receive(wire.Hello(1))
    agent.receive(wire.EchoRequest(2))
    agent.receive(wire.FeaturesRequest(3))
    assert sent == [wire.Hello(1), wire.EchoReply(2), wire.FeaturesReply(3, 2, 2)]


def test_agent_caps_probe_on_wired_port_returns_invalid_phys_port():
    dp, _ = make_ap()
    agent, sent = agent_for(dp)
    agent.receive(wire.Experimenter(4, wire.PportCapsRequest(1)))
    agent.receive(wire.Experimenter(5, wire.PportCapsRequest(2)))
    assert sent[0].body.code is WirelessErrorCode.INVALID_PHYS_PORT
    assert isinstance(sent[1].body, wire.PportCapsReply) and sent[1].xid == 5


def test_agent_stats_for_any_port_and_create_ack():
    dp, lport = make_ap()
    agent, sent = agent_for(dp)
    agent.receive(wire.Experimenter(6, wire.LportConfigRequest(LportOp.CREATE, 0, 2, "x", bytes.fromhex("02000000aa07"))))
    assert sent[-1].xid == 6 and sent[-1].body.logical_port == lport + 1
    agent.receive(wire.Experimenter(7, wire.LportStatsRequest(wire.PORT_ANY)))
    assert [m.body.logical_port for m in sent[-2:]] == [lport, lport + 1]


def test_agent_reports_flow_mod_failure_and_bad_requests():
    dp, _ = make_ap()
    agent, sent = agent_for(dp)
    fm = wire.FlowModBody(wire.FlowModCommand.DELETE_STRICT, 5, wire.MatchSet(eth_dst=STA))
    agent.receive(wire.FlowMod(8, fm))
    assert isinstance(sent[-1], wire.Error) and sent[-1].of_type == 5
    agent.receive(wire.Experimenter(9, wire.EventReport(2, 100, E.PROBE, STA)))
    assert isinstance(sent[-1], wire.Error) and sent[-1].of_type == 1


def test_agent_forwards_events_as_experimenter_messages():
    dp, lport = make_ap()
    agent, sent = agent_for(dp)
    dp.handle_mgmt(MgmtKind.AUTH, STA, None, lport)
    assert isinstance(sent[0], wire.Experimenter)
    assert sent[0].body.event is E.AUTHENTICATION
    wire.encode(sent[0])


def test_agent_drop_station_round_trip():
    dp, lport = make_ap()
    force_state(dp, lport, STA, AZ)
    agent, sent = agent_for(dp)
    agent.receive(wire.Experimenter(11, wire.DropStation(lport, STA)))
    assert sent[0].body.event is E.DEAUTHENTICATION
    agent.receive(wire.Experimenter(12, wire.DropStation(lport, STA)))
    assert sent[-1].xid == 12 and sent[-1].body.code is WirelessErrorCode.UNKNOWN_STATION
