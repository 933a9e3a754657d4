import struct

import pytest

from afx import wire
from afx.controller import (
    ConnState,
    Controller,
    HandshakeError,
    HandshakeErrorKind,
    NetworkView,
    Role,
    RssiSeries,
    TransportClosed,
)
from afx.harness.sim import Simulator
from afx.wire import EventReport, WirelessEventKind
from rig import STA, Rig


class Capture:
    def __init__(self):
        self.sent = []
        self.closed = False

    def send(self, data):
        self.sent.append(bytes(data))

    def close(self):
        self.closed = True


def test_handshake_classifies_roles_and_caps():
    rig = Rig()
    rig.run(0.1)
    h = rig.ctl.handles
    assert sorted(h) == [1, 2, 3]
    assert h[1].role is Role.SWITCH and h[1].phys_caps == {}
    for dpid in (2, 3):
        assert h[dpid].role is Role.ACCESS_POINT
        assert sorted(h[dpid].phys_caps) == [2]
        assert sorted(h[dpid].lports) == [100]
        assert h[dpid].live
    assert rig.ctl.errors == []


def test_handshake_message_order():
    sim = Simulator()
    ctl = Controller(sim)
    ch = Capture()
    conn = ctl.connect(ch, "x")
    assert isinstance(wire.decode(ch.sent[0]), wire.Hello)
    ctl.receive(conn, wire.encode(wire.Hello(1)))
    assert isinstance(wire.decode(ch.sent[1]), wire.FeaturesRequest)
    assert conn.state is ConnState.FEATURES_WAIT
    ctl.receive(conn, wire.encode(wire.FeaturesReply(2, 9, 0)))
    assert conn.state is ConnState.READY
    assert ctl.handles[9].role is Role.SWITCH


def test_version_mismatch_closes_connection():
    sim = Simulator()
    ctl = Controller(sim)
    ch = Capture()
    conn = ctl.connect(ch, "old")
    ctl.receive(conn, struct.pack("!BBHI", 0x01, 0, 8, 1))
    assert conn.state is ConnState.CLOSED and ch.closed
    assert isinstance(conn.error, HandshakeError)
    assert conn.error.kind is HandshakeErrorKind.VERSION_MISMATCH
    assert ctl.handles == {}


def test_handshake_times_out_after_one_second():
    sim = Simulator()
    ctl = Controller(sim)
    ch = Capture()
    conn = ctl.connect(ch, "silent")
    sim.run_until(999_999)
    assert conn.state is ConnState.HELLO_WAIT
    sim.run_until(1_000_000)
    assert conn.state is ConnState.CLOSED
    assert conn.error.kind is HandshakeErrorKind.TIMEOUT


def test_duplicate_datapath_id_is_rejected():
    rig = Rig()
    rig.run(0.1)
    from afx.dataplane import Datapath

    second = rig.connect(Datapath(2, "clone", wired_ports=(1,)))
    rig.run(0.2)
    assert second.state is ConnState.CLOSED
    assert rig.ctl.handles[2].conn is not second and rig.ctl.handles[2].live


def test_polls_each_lport_every_half_second():
    rig = Rig()
    rig.run(5.0)
    assert rig.ctl.polls == {(2, 100): 10, (3, 100): 10}
    assert rig.ctl.unanswered == {}


def test_unanswered_polls_are_counted():
    rig = Rig()
    rig.run(0.1)
    rig.duplexes[2].a_to_b.deliver = lambda data: None  # AP1 goes deaf
    rig.run(5.0)
    assert rig.ctl.polls[(2, 100)] == 10
    assert rig.ctl.unanswered[(2, 100)] == 9
    assert (3, 100) not in rig.ctl.unanswered


def test_stats_replies_feed_rssi_series():
    rig = Rig()
    rig.run(0.1)
    rig.associate(0)
    rig.aps[0].observe_rssi(100, STA, -61.0)
    rig.run(1.1)
    series = rig.ctl.view.series_for(STA)[rig.ap_ref(0)]
    assert [s.source for s in series.samples] == ["stats", "stats"]


def test_probe_event_adds_sample():
    rig = Rig()
    rig.run(0.1)
    from afx.dataplane import MgmtKind

    rig.aps[1].handle_mgmt(MgmtKind.PROBE, STA, -72.0, 100)
    rig.run(0.2)
    s = rig.ctl.view.series_for(STA)[rig.ap_ref(1)]
    assert len(s) == 1 and s.samples[0].rssi_dbm == -72 and s.samples[0].source == "probe"
    assert STA not in rig.ctl.view.associations


def test_reassociation_moves_the_association():
    rig = Rig()
    rig.run(0.1)
    rig.associate(0)
    rig.run(0.2)
    assert rig.ctl.view.associations[STA].ap == rig.ap_ref(0)
    rig.associate(1, reassoc=True)
    rig.run(0.3)
    assert rig.ctl.view.associations[STA].ap == rig.ap_ref(1)


def test_disassociation_from_old_ap_after_move_is_ignored():
    view = NetworkView()
    ev = lambda kind, lport: EventReport(2, lport, kind, STA)
    from afx.controller import ApRef

    assert view.apply_event(ev(WirelessEventKind.ASSOCIATION, 100), 2, 0)
    assert view.apply_event(ev(WirelessEventKind.REASSOCIATION, 101), 2, 1)
    assert not view.apply_event(ev(WirelessEventKind.DISASSOCIATION, 100), 2, 2)
    assert view.associations[STA].ap == ApRef(2, 101)


def test_duplicate_events_are_idempotent():
    rig = Rig()
    rig.run(0.1)
    h = rig.ctl.handles[2]
    ev = EventReport(2, 100, WirelessEventKind.ASSOCIATION, STA)
    rig.ctl.on_event(ev, h)
    before = (dict(rig.ctl.view.associations), len(rig.routing.audit), len(rig.conns[1].sent_xids))
    rig.ctl.on_event(ev, h)
    after = (dict(rig.ctl.view.associations), len(rig.routing.audit), len(rig.conns[1].sent_xids))
    assert before == after


def test_event_from_unknown_source_is_dropped():
    rig = Rig()
    rig.run(0.1)
    rig.ctl.on_event(EventReport(2, 100, WirelessEventKind.ASSOCIATION, STA), None)
    rig.ctl.on_event(EventReport(2, 100, WirelessEventKind.ASSOCIATION, STA), rig.ctl.handles[1])
    assert rig.ctl.view.associations == {}


def test_xids_are_consecutive_per_connection():
    rig = Rig()
    rig.run(3.0)
    for conn in rig.conns.values():
        xs = conn.sent_xids
        assert xs == list(range(1, len(xs) + 1))


def test_drop_station_encodes_subtype_seven():
    rig = Rig()
    rig.run(0.1)
    h = rig.ctl.handles[2]
    cap = Capture()
    h.conn.channel = cap
    xid = rig.ctl.drop_station(h, 100, STA)
    raw = cap.sent[-1]
    assert struct.unpack_from("!BBHIIH", raw) == (0x04, 4, len(raw), xid, wire.AETHER_EXPERIMENTER_ID, 7)
    msg = wire.decode(raw)
    assert msg.body == wire.DropStation(100, STA)


def test_drop_station_reaches_datapath():
    rig = Rig()
    rig.run(0.1)
    rig.associate(0)
    rig.run(0.2)
    rig.ctl.drop_station(rig.ctl.handles[2], 100, STA)
    rig.run(0.3)
    assert STA not in rig.aps[0].lports[100].stations
    assert STA not in rig.ctl.view.associations


def test_sending_on_closed_connection_raises():
    rig = Rig()
    rig.run(0.1)
    h = rig.ctl.handles[3]
    h.conn.close()
    assert not h.live
    with pytest.raises(TransportClosed):
        rig.ctl.drop_station(h, 100, STA)
    with pytest.raises(TransportClosed):
        rig.ctl.send_flow_mod(h, wire.FlowModBody(wire.FlowModCommand.ADD, 1, wire.MatchSet(eth_dst=STA)))


def test_rssi_series_bounded_and_ordered():
    s = RssiSeries(capacity=4)
    for t in range(10):
        assert s.append(t, -50.0 - t, "stats")
    assert len(s) == 4
    assert [x.t_us for x in s.samples] == [6, 7, 8, 9]
    assert not s.append(3, -40.0, "probe")
    assert s.discarded == 1 and s.last_t_us == 9


def test_rssi_series_same_timestamp_replaces_tail():
    s = RssiSeries(alpha=0.5)
    s.append(0, -60.0, "stats")
    s.append(1, -70.0, "stats")
    assert s.ewma == -65.0
    s.append(1, -80.0, "probe")
    assert len(s) == 2 and s.ewma == -70.0 and s.count == 2


def test_rssi_series_ewma():
    s = RssiSeries()
    for t, r in enumerate([-60, -65, -70]):
        s.append(t, r, "stats")
    assert s.ewma == pytest.approx(-64.05)
