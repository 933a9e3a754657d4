"""Layer 2 fast-handoff application.

Three phases per station: a predictor decides a handoff is coming, the
switch then multicasts the station's downstream traffic to both the serving
and the predicted AP, and once the station associates at the new AP the
multicast is collapsed to a single output (or reverted on timeout).

:class:`StationRouting` provides the plain unicast forwarding that the
handoff app layers on top of.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .controller import App, ApRef, Controller, DatapathHandle, NetworkView, Role, TransportClosed
from .wire import FlowModBody, FlowModCommand, MatchSet, Output, WirelessEventKind

UNICAST_PRIORITY = 100
MULTICAST_PRIORITY = UNICAST_PRIORITY + 10
US = 1_000_000


class Phase(enum.Enum):
    IDLE = "Idle"
    MULTICASTING = "Multicasting"
    REDIRECTED = "Redirected"


@dataclass(frozen=True)
class HandoffPrediction:
    sta: bytes
    from_ap: ApRef
    to_ap: ApRef
    predicted_at_us: int

    def __post_init__(self):
        if self.from_ap == self.to_ap:
            raise ValueError("from_ap and to_ap must differ")


@dataclass
class L2Topology:
    """Wired layout the apps need: which switch port reaches which AP/host."""

    switch_dpid: int
    switch_port_to_ap: dict[int, int]  # AP datapath id -> switch port
    ap_uplink: dict[int, int]  # AP datapath id -> AP's port towards the switch
    hosts: dict[bytes, int] = field(default_factory=dict)  # wired host MAC -> switch port


@dataclass(frozen=True)
class IssuedFlowMod:
    datapath_id: int
    body: FlowModBody
    xid: int


@dataclass(frozen=True)
class PhaseTransition:
    t_us: int
    sta: bytes
    before: Phase
    after: Phase
    reason: str
    flow_mods: tuple[IssuedFlowMod, ...] = ()


def _dst(sta: bytes) -> MatchSet:
    return MatchSet(eth_dst=sta)


def add(prio: int, sta: bytes, *ports: int) -> FlowModBody:
    return FlowModBody(FlowModCommand.ADD, prio, _dst(sta), tuple(Output(p) for p in ports))


def modify(prio: int, sta: bytes, *ports: int) -> FlowModBody:
    return FlowModBody(FlowModCommand.MODIFY, prio, _dst(sta), tuple(Output(p) for p in ports))


def delete(prio: int, sta: bytes) -> FlowModBody:
    return FlowModBody(FlowModCommand.DELETE_STRICT, prio, _dst(sta))


# -- predictors ------------------------------------------------------------------


class FixedPredictor:
    """Predicts one handoff at a fixed experiment time, once."""

    def __init__(self, sta: bytes, from_ap: ApRef, to_ap: ApRef, t_fire_s: float = 7.0):
        self.sta = sta
        self.from_ap = from_ap
        self.to_ap = to_ap
        self.t_fire_us = math.inf if math.isinf(t_fire_s) else round(t_fire_s * US)
        self.fired_at_us: int | None = None

    def predict_fixed(self, t_now_us: int) -> HandoffPrediction | None:
        if self.fired_at_us is not None or t_now_us < self.t_fire_us:
            return None
        self.fired_at_us = t_now_us
        return HandoffPrediction(self.sta, self.from_ap, self.to_ap, t_now_us)


class TrendPredictor:
    """Fires when a candidate AP's RSSI EWMA beats the serving AP's by a margin
    on consecutive evaluations."""

    def __init__(self, margin_db: float = 3.0, confirmations: int = 2, min_samples: int = 2):
        self.margin_db = margin_db
        self.confirmations = confirmations
        self.min_samples = min_samples
        self._streak: dict[bytes, tuple[ApRef, int]] = {}

    def predict_trend(self, view: NetworkView, sta: bytes, t_now_us: int = 0) -> HandoffPrediction | None:
        assoc = view.associations.get(sta)
        if assoc is None:
            self._streak.pop(sta, None)
            return None
        series = view.series_for(sta)
        serving = series.get(assoc.ap)
        if serving is None or serving.count < self.min_samples:
            return None
        candidates = [
            (ap, s) for ap, s in series.items() if ap != assoc.ap and s.count >= self.min_samples
        ]
        if not candidates:
            self._streak.pop(sta, None)
            return None
        best_ap, best = min(candidates, key=lambda c: (-c[1].ewma, c[0].lport, c[0].datapath_id))
        if best.ewma > serving.ewma + self.margin_db:
            prev_ap, n = self._streak.get(sta, (best_ap, 0))
            n = n + 1 if prev_ap == best_ap else 1
            self._streak[sta] = (best_ap, n)
            if n >= self.confirmations:
                del self._streak[sta]
                return HandoffPrediction(sta, assoc.ap, best_ap, t_now_us)
        else:
            self._streak.pop(sta, None)
        return None


# -- apps ------------------------------------------------------------------------


class StationRouting(App):
    """Proactive unicast forwarding for wired hosts and wireless stations."""

    def __init__(self, topo: L2Topology):
        self.topo = topo
        self.paths: dict[bytes, ApRef] = {}
        self.audit: list[tuple[int, str, tuple[IssuedFlowMod, ...]]] = []
        self.busy: set[bytes] = set()  # stations under handoff control

    def _handle(self, dpid: int) -> DatapathHandle | None:
        h = self.controller.handles.get(dpid)
        return h if h is not None and h.live else None

    def push(self, dpid: int, fm: FlowModBody) -> IssuedFlowMod:
        handle = self._handle(dpid)
        if handle is None:
            raise TransportClosed(f"datapath {dpid:#x}")
        return IssuedFlowMod(dpid, fm, self.controller.send_flow_mod(handle, fm))

    def on_datapath_up(self, handle: DatapathHandle) -> None:
        now = self.controller.loop.now_us()
        issued = []
        if handle.datapath_id == self.topo.switch_dpid:
            for mac, port in sorted(self.topo.hosts.items()):
                issued.append(self.push(handle.datapath_id, add(UNICAST_PRIORITY, mac, port)))
        elif handle.datapath_id in self.topo.ap_uplink:
            uplink = self.topo.ap_uplink[handle.datapath_id]
            for mac in sorted(self.topo.hosts):
                issued.append(self.push(handle.datapath_id, add(UNICAST_PRIORITY, mac, uplink)))
        if issued:
            self.audit.append((now, f"datapath {handle.datapath_id:#x} up", tuple(issued)))

    def on_association(self, sta: bytes, ap: ApRef, kind: WirelessEventKind) -> None:
        if sta in self.busy or self.paths.get(sta) == ap:
            return
        self.route(sta, ap, reason=f"{kind.name.lower()} at {ap.datapath_id:#x}/{ap.lport}")

    def route(self, sta: bytes, ap: ApRef, reason: str) -> tuple[IssuedFlowMod, ...]:
        """Point the station's unicast path at ``ap``."""
        sw = self.topo.switch_dpid
        old = self.paths.get(sta)
        issued = []
        out = self.topo.switch_port_to_ap[ap.datapath_id]
        if old is None:
            issued.append(self.push(sw, add(UNICAST_PRIORITY, sta, out)))
        else:
            issued.append(self.push(sw, modify(UNICAST_PRIORITY, sta, out)))
        issued.append(self.push(ap.datapath_id, add(UNICAST_PRIORITY, sta, ap.lport)))
        if old is not None and old.datapath_id != ap.datapath_id:
            issued.append(self.push(old.datapath_id, delete(UNICAST_PRIORITY, sta)))
        self.paths[sta] = ap
        self.audit.append((self.controller.loop.now_us(), reason, tuple(issued)))
        return tuple(issued)


@dataclass
class _Track:
    phase: Phase = Phase.IDLE
    prediction: HandoffPrediction | None = None
    epoch: int = 0
    deadline_us: int | None = None


class HandoffApp(App):
    """Prediction, multicast and redirection for wireless stations.

    ``predictor`` is ``"fixed"`` or ``"trend"``. For the fixed predictor,
    ``fixed_sta``/``fixed_from``/``fixed_to`` name the station and the AP
    datapath ids; the APs' first logical ports are used once they connect.
    """

    def __init__(
        self,
        routing: StationRouting,
        predictor: str = "fixed",
        fixed_sta: bytes | None = None,
        fixed_from: int | None = None,
        fixed_to: int | None = None,
        t_fire_s: float = 7.0,
        margin_db: float = 3.0,
        timeout_s: float = 15.0,
        trend_period_s: float = 0.5,
    ):
        if predictor not in ("fixed", "trend"):
            raise ValueError(f"unknown predictor {predictor!r}")
        self.routing = routing
        self.predictor_kind = predictor
        self.fixed_args = (fixed_sta, fixed_from, fixed_to, t_fire_s)
        self.fixed: FixedPredictor | None = None
        self.trend = TrendPredictor(margin_db)
        self.timeout_us = round(timeout_s * US)
        self.trend_period_us = round(trend_period_s * US)
        self._next_trend_us = 0
        self.tracks: dict[bytes, _Track] = {}
        self.audit: list[PhaseTransition] = []

    @property
    def topo(self) -> L2Topology:
        return self.routing.topo

    def phase(self, sta: bytes) -> Phase:
        t = self.tracks.get(sta)
        return t.phase if t else Phase.IDLE

    def _transition(self, sta: bytes, track: _Track, after: Phase, reason: str, issued=()) -> None:
        now = self.controller.loop.now_us()
        self.audit.append(PhaseTransition(now, sta, track.phase, after, reason, tuple(issued)))
        track.phase = after
        if after is Phase.IDLE:
            track.prediction = None
            track.deadline_us = None
            self.routing.busy.discard(sta)

    def _first_lport(self, dpid: int) -> int | None:
        h = self.controller.handles.get(dpid)
        if h is None or h.role is not Role.ACCESS_POINT or not h.lports:
            return None
        return min(h.lports)

    def on_datapath_up(self, handle: DatapathHandle) -> None:
        if self.predictor_kind != "fixed" or self.fixed is not None:
            return
        sta, src, dst, t_fire = self.fixed_args
        if sta is None or src is None or dst is None:
            return
        a, b = self._first_lport(src), self._first_lport(dst)
        if a is not None and b is not None:
            self.fixed = FixedPredictor(sta, ApRef(src, a), ApRef(dst, b), t_fire)

    def on_tick(self, now_us: int) -> None:
        if self.fixed is not None:
            pred = self.fixed.predict_fixed(now_us)
            if pred is not None:
                self.begin_multicast(pred)
        elif self.predictor_kind == "trend" and now_us >= self._next_trend_us:
            self._next_trend_us = now_us + self.trend_period_us
            for sta in sorted(self.controller.view.associations):
                if self.phase(sta) is not Phase.IDLE:
                    continue
                pred = self.trend.predict_trend(self.controller.view, sta, now_us)
                if pred is not None:
                    self.begin_multicast(pred)

    # -- phase 2: multicast -----------------------------------------------------

    def begin_multicast(self, pred: HandoffPrediction) -> list[IssuedFlowMod]:
        track = self.tracks.setdefault(pred.sta, _Track())
        if track.phase is not Phase.IDLE:
            return []
        sw = self.topo.switch_dpid
        to_port = self.topo.switch_port_to_ap[pred.to_ap.datapath_id]
        from_port = self.topo.switch_port_to_ap[pred.from_ap.datapath_id]
        try:
            issued = [
                self.routing.push(sw, add(MULTICAST_PRIORITY, pred.sta, from_port, to_port)),
                self.routing.push(pred.to_ap.datapath_id, add(UNICAST_PRIORITY, pred.sta, pred.to_ap.lport)),
            ]
        except TransportClosed:
            return []
        track.prediction = pred
        track.epoch += 1
        track.deadline_us = pred.predicted_at_us + self.timeout_us
        self.routing.busy.add(pred.sta)
        self._transition(pred.sta, track, Phase.MULTICASTING, "prediction", issued)
        epoch = track.epoch
        delay = max(0, track.deadline_us - self.controller.loop.now_us())
        self.controller.loop.call_later(delay, lambda: self.on_deadline(self.controller.loop.now_us(), pred.sta, epoch))
        return issued

    # -- phase 3: redirect / revert -----------------------------------------------

    def on_association(self, sta: bytes, ap: ApRef, kind: WirelessEventKind) -> list[IssuedFlowMod]:
        track = self.tracks.get(sta)
        if track is None or track.phase is not Phase.MULTICASTING:
            return []
        pred = track.prediction
        if ap == pred.from_ap:
            return []
        sw = self.topo.switch_dpid
        push = self.routing.push
        issued = [
            push(sw, modify(UNICAST_PRIORITY, sta, self.topo.switch_port_to_ap[ap.datapath_id])),
            push(sw, delete(MULTICAST_PRIORITY, sta)),
            push(pred.from_ap.datapath_id, delete(UNICAST_PRIORITY, sta)),
        ]
        self.routing.paths[sta] = ap
        if ap == pred.to_ap:
            self._transition(sta, track, Phase.REDIRECTED, f"{kind.name.lower()} at target", issued)
            self._transition(sta, track, Phase.IDLE, "epoch close")
        else:
            issued.append(push(pred.to_ap.datapath_id, delete(UNICAST_PRIORITY, sta)))
            issued.append(push(ap.datapath_id, add(UNICAST_PRIORITY, sta, ap.lport)))
            self._transition(sta, track, Phase.IDLE, "mis-prediction redirect", issued)
        return issued

    def on_deadline(self, t_now_us: int, sta: bytes, epoch: int | None = None) -> list[IssuedFlowMod]:
        track = self.tracks.get(sta)
        if track is None or track.phase is not Phase.MULTICASTING:
            return []
        if epoch is not None and epoch != track.epoch:
            return []
        if t_now_us < track.deadline_us:
            return []
        pred = track.prediction
        issued = [
            self.routing.push(self.topo.switch_dpid, delete(MULTICAST_PRIORITY, sta)),
            self.routing.push(pred.to_ap.datapath_id, delete(UNICAST_PRIORITY, sta)),
        ]
        self._transition(sta, track, Phase.IDLE, "timeout revert", issued)
        return issued
