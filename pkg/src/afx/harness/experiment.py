"""Build a topology from config and run one experiment on the event loop.

Time zero is the start of the measured experiment. Datapaths connect to the
controller and the station joins during a warm-up phase at negative time,
so the traffic generator starts against a fully set-up network.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

from .. import wire
from ..controller import Controller
from ..dataplane import Agent, Datapath, EtherFrame, MgmtKind, Mode, WirelessPhysicalPort
from ..handoff import HandoffApp, L2Topology, StationRouting
from ..radio import Delivered, RadioAP, RadioWorld, StationAgent, to_us
from ..wire import LportConfigRequest, LportOp
from . import metrics
from .config import ConfigError, RunMode, TopologyConfig
from .metrics import DatagramRecord, IntervalStat, Outcome, Totals
from .sim import Simulator
from .transport import Duplex, make_duplex

log = logging.getLogger(__name__)

# Ethernet + IPv4 + UDP header bytes wrapped around each datagram payload
HEADER_OVERHEAD = 14 + 20 + 8


@dataclass
class ExperimentResult:
    config: TopologyConfig
    records: list[DatagramRecord]
    intervals: list[IntervalStat]
    handoff_duration_s: float
    dip_start_s: float | None
    totals: Totals
    lost_in_window: int
    roam_commits_s: list[float] = field(default_factory=list)
    reassociations_s: list[float] = field(default_factory=list)
    controller_errors: int = 0

    def summary(self) -> dict:
        e = self.config.experiment
        thr = [iv.throughput_bps for iv in self.intervals]
        loss = [iv.loss_rate for iv in self.intervals if iv.sent]
        echo = {k: v for k, v in self.config.raw.items() if k != "experiment"}
        exp = asdict(e)
        exp["mode"] = e.mode.value
        exp["loss_window_s"] = list(e.loss_window_s)
        echo["experiment"] = exp
        return {
            "seed": e.seed,
            "mode": e.mode.value,
            "predictor": e.predictor,
            "transport": e.transport,
            "duration_s": e.duration_s,
            "handoff_duration_s": self.handoff_duration_s,
            "dip_start_s": self.dip_start_s,
            "mean_throughput_bps": metrics.mean(thr),
            "mean_loss_rate": metrics.mean(loss),
            "lost_in_window": {"window_s": list(e.loss_window_s), "count": self.lost_in_window},
            "totals": {
                "sent": self.totals.sent,
                "delivered": self.totals.delivered,
                "dropped": self.totals.dropped,
                "in_flight": self.totals.in_flight,
                "conserved": self.totals.conserved,
            },
            "roam_commits_s": self.roam_commits_s,
            "reassociations_s": self.reassociations_s,
            "controller_errors": self.controller_errors,
            "config": echo,
        }


class Experiment:
    def __init__(self, cfg: TopologyConfig):
        e = cfg.experiment
        e.validate()
        self.cfg = cfg
        self.start_us = -to_us(e.warmup_s)
        self.duration_us = to_us(e.duration_s)
        self.tick_us = to_us(e.tick_s)
        self.sim = Simulator(self.start_us)
        self.sdn = e.mode is RunMode.AETHERFLOW
        dp_mode = Mode.SDN if self.sdn else Mode.BRIDGE

        self.datapaths: dict[str, Datapath] = {}
        self.radio = RadioWorld(cfg.pathloss, e.seed, cfg.noise, cfg.rx_sensitivity_dbm, cfg.roaming)
        self.radio.now_us = self.start_us
        self.radio_aps: dict[tuple[str, int], RadioAP] = {}
        # datapaths count time from power-on, so their timestamps stay unsigned
        boot_clock = lambda: self.sim.now_us() - self.start_us  # noqa: E731
        for sw in cfg.switches:
            self.datapaths[sw.name] = Datapath(sw.datapath_id, sw.name, tuple(sw.ports), dp_mode, boot_clock)
        for ap in cfg.aps:
            dp = Datapath(ap.datapath_id, ap.name, tuple(ap.ports), dp_mode, boot_clock)
            self.datapaths[ap.name] = dp
            n_lports = sum(len(r.lports) for r in ap.radios)
            for rad in ap.radios:
                dp.add_phys_port(
                    WirelessPhysicalPort(rad.port, rad.dot11_version, rad.channel, rad.tx_power_dbm, rad.caps)
                )
                for lp in rad.lports:
                    pid = dp.apply_lport_config(
                        LportConfigRequest(LportOp.CREATE, 0, rad.port, lp.ssid, lp.bssid, lp.security)
                    )
                    name = ap.name if n_lports == 1 else f"{ap.name}/{pid}"
                    self.radio_aps[(ap.name, pid)] = self.radio.add_ap(RadioAP(name, dp, pid, ap.position))

        self.host_macs = {h.name: h.mac for h in cfg.hosts}
        self.links: dict[tuple[str, int], tuple[str, int, int, float]] = {}
        for link in cfg.links:
            lat = to_us(link.latency_s)
            self.links[link.a] = (link.b[0], link.b[1], lat, link.capacity_bps)
            self.links[link.b] = (link.a[0], link.a[1], lat, link.capacity_bps)

        self.station_specs = {s.name: s for s in cfg.stations}
        self._joins = sorted((to_us(s.join_at_s), s.name) for s in cfg.stations)
        self.air_latency_us = to_us(cfg.air_latency_s)

        src = cfg.traffic_source
        self.source_mac = self.host_macs[src]
        self.sink_mac = self.station_specs[cfg.traffic_sink].mac
        self.payload_bytes = e.datagram_payload_bytes
        self.frame_bytes = e.datagram_payload_bytes + HEADER_OVERHEAD
        self._sent_us: list[int] = []
        self._delivered_us: list[int | None] = []
        self._copies: list[int] = []

        self.roam_commits_us: list[int] = []
        self.reassoc_us: list[int] = []

        self.controller: Controller | None = None
        self.routing: StationRouting | None = None
        self.handoff: HandoffApp | None = None
        self._duplexes: list[Duplex] = []
        if self.sdn:
            self._build_control()

        self.sim.schedule(self.start_us + self.tick_us, self._radio_tick)
        if e.offered_load_bps > 0:
            self.sim.schedule(0, lambda: self._emit(0))
        self._finished = False

    # -- control plane ------------------------------------------------------

    def _l2_topology(self) -> L2Topology:
        cfg = self.cfg
        sw = cfg.switches[0]
        port_to_ap, uplink, hosts = {}, {}, {}
        for ap in cfg.aps:
            peer = self.links.get((ap.name, ap.uplink_port))
            if peer is None or peer[0] != sw.name:
                raise ConfigError(f"nodes.aps.{ap.name}.uplink_port", f"not linked to switch {sw.name}")
            port_to_ap[ap.datapath_id] = peer[1]
            uplink[ap.datapath_id] = ap.uplink_port
        for h in cfg.hosts:
            peer = self.links.get((h.name, 0))
            if peer is None or peer[0] != sw.name:
                raise ConfigError("links", f"host {h.name} is not linked to switch {sw.name}")
            hosts[h.mac] = peer[1]
        return L2Topology(sw.datapath_id, port_to_ap, uplink, hosts)

    def _build_control(self) -> None:
        cfg = self.cfg
        e = cfg.experiment
        ctl = Controller(self.sim, poll_period_s=cfg.poll_period_s, tick_s=e.tick_s)
        self.controller = ctl
        self.routing = ctl.add_app(StationRouting(self._l2_topology()))
        app = cfg.app
        by_name = {n.name: n for n in (*cfg.aps,)}
        fixed_sta = self.station_specs[app.fixed_sta].mac if app.fixed_sta in self.station_specs else None
        self.handoff = ctl.add_app(
            HandoffApp(
                self.routing,
                predictor=e.predictor,
                fixed_sta=fixed_sta,
                fixed_from=by_name[app.fixed_from].datapath_id if app.fixed_from in by_name else None,
                fixed_to=by_name[app.fixed_to].datapath_id if app.fixed_to in by_name else None,
                t_fire_s=app.fixed_t_fire_s,
                margin_db=app.margin_db,
                timeout_s=app.timeout_s,
                trend_period_s=cfg.poll_period_s,
            )
        )
        latency = to_us(cfg.control_latency_s)
        tcp = e.transport == "tcp"
        for name in sorted(self.datapaths, key=lambda n: self.datapaths[n].datapath_id):
            self._connect(self.datapaths[name], latency, tcp)
        ctl.start()

    def _connect(self, dp: Datapath, latency_us: int, tcp: bool) -> None:
        ctl = self.controller
        reader = wire.FrameReader()
        holder = {}

        def to_agent(data: bytes) -> None:
            try:
                frames = reader.feed(data)
            except wire.DecodeError as exc:
                log.warning("%s: bad control stream: %s", dp.name, exc)
                return
            for f in frames:
                try:
                    agent.receive(wire.decode(f))
                except wire.DecodeError as exc:
                    log.warning("%s: undecodable message: %s", dp.name, exc)

        def to_controller(data: bytes) -> None:
            ctl.receive(holder["conn"], data)

        duplex = make_duplex(self.sim, latency_us, to_agent, to_controller, tcp=tcp)
        self._duplexes.append(duplex)
        agent = Agent(dp, lambda msg: duplex.b_to_a.send(wire.encode(msg)))
        holder["conn"] = ctl.connect(duplex.a_to_b, dp.name)

    # -- radio -----------------------------------------------------------------

    def _radio_tick(self) -> None:
        radio = self.radio
        while self._joins and self._joins[0][0] <= radio.now_us + self.tick_us:
            _, name = self._joins.pop(0)
            spec = self.station_specs[name]
            dst = self.host_macs.get(spec.uplink_dst, b"\xff" * 6)
            radio.add_station(StationAgent(spec.mac, spec.ssid, spec.plan, spec.roam, uplink_dst=dst))
        for ev in radio.step(self.tick_us):
            if ev.kind == "roam":
                self.roam_commits_us.append(ev.at_us)
            elif ev.kind == "mgmt" and ev.mgmt is MgmtKind.REASSOC:
                self.reassoc_us.append(ev.at_us)
            elif ev.kind == "uplink":
                ap = radio.aps[ev.ap]
                ap.datapath.record_rx(ev.lport, ev.sta, ev.frame.length_bytes)
                self._arrive(ap.datapath.name, ev.lport, ev.frame)
        self.sim.call_later(self.tick_us, self._radio_tick)

    # -- traffic -----------------------------------------------------------------

    def _emit(self, seq: int) -> None:
        now = self.sim.now_us()
        frame = EtherFrame(self.source_mac, self.sink_mac, self.frame_bytes, seq, now)
        self._sent_us.append(now)
        self._delivered_us.append(None)
        self._copies.append(1)
        e = self.cfg.experiment
        nxt = round((seq + 1) * self.payload_bytes * 8 * 1_000_000 / e.offered_load_bps)
        if nxt < self.duration_us:
            self.sim.schedule(nxt, lambda: self._emit(seq + 1))
        self._wire_tx(self.cfg.traffic_source, 0, frame)

    def _tracked(self, frame: EtherFrame) -> bool:
        return frame.src == self.source_mac

    def _copy_done(self, frame: EtherFrame, delivered: bool = False) -> None:
        if not self._tracked(frame):
            return
        seq = frame.flow_seq
        self._copies[seq] -= 1
        if delivered and self._delivered_us[seq] is None:
            self._delivered_us[seq] = self.sim.now_us()

    def _arrive(self, node: str, port: int, frame: EtherFrame) -> None:
        dp = self.datapaths.get(node)
        if dp is None:
            # a wired host: it is the endpoint of whatever reaches it
            self._copy_done(frame)
            return
        outs = dp.forward(frame, port)
        if self._tracked(frame):
            self._copies[frame.flow_seq] += len(outs) - 1
        for out in outs:
            if out in dp.lports:
                self._air_tx(dp, out, frame)
            else:
                self._wire_tx(node, out, frame)

    def _wire_tx(self, node: str, port: int, frame: EtherFrame) -> None:
        peer = self.links.get((node, port))
        if peer is None:
            self._copy_done(frame)
            return
        pnode, pport, latency_us, capacity = peer
        delay = latency_us + round(frame.length_bytes * 8 * 1_000_000 / capacity)
        self.sim.call_later(delay, lambda: self._arrive(pnode, pport, frame))

    def _air_tx(self, dp: Datapath, lport: int, frame: EtherFrame) -> None:
        ap = self.radio_aps[(dp.name, lport)]
        result = self.radio.deliver_wireless(ap, frame.dst, frame)
        if isinstance(result, Delivered):
            self.sim.call_later(self.air_latency_us * result.attempts, lambda: self._copy_done(frame, True))
        else:
            self._copy_done(frame)

    # -- running -------------------------------------------------------------------

    def run_until(self, t_s: float) -> None:
        self.sim.run_until(min(to_us(t_s), self.duration_us))

    def now_s(self) -> float:
        return self.sim.now_us() / 1_000_000

    def finish(self) -> ExperimentResult:
        if not self._finished:
            self.sim.run_until(self.duration_us)
            for d in self._duplexes:
                d.close()
            self._finished = True
        e = self.cfg.experiment
        records = []
        for seq, sent in enumerate(self._sent_us):
            got = self._delivered_us[seq]
            if got is not None:
                outcome = Outcome.DELIVERED
            elif self._copies[seq] > 0:
                outcome = Outcome.IN_FLIGHT
            else:
                outcome = Outcome.DROPPED
            records.append(DatagramRecord(seq, sent, got, outcome))
        intervals = metrics.compute_intervals(
            records, self.duration_us, to_us(e.measure_interval_s), self.payload_bytes
        )
        duration, dip = metrics.compute_handoff_duration(
            intervals, e.handoff_threshold_bps, e.handoff_window_start_s
        )
        return ExperimentResult(
            config=self.cfg,
            records=records,
            intervals=intervals,
            handoff_duration_s=duration,
            dip_start_s=dip,
            totals=metrics.totals(records),
            lost_in_window=metrics.lost_in_window(records, *e.loss_window_s),
            roam_commits_s=[t / 1_000_000 for t in self.roam_commits_us],
            reassociations_s=[t / 1_000_000 for t in self.reassoc_us],
            controller_errors=len(self.controller.errors) if self.controller else 0,
        )


def run_experiment(cfg: TopologyConfig) -> ExperimentResult:
    return Experiment(cfg).finish()
