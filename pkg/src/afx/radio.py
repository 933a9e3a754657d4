"""Deterministic RF world: positions, path loss, station roaming, delivery.

Time is integer microseconds throughout. All randomness comes from two
seeded streams (shadowing and per-attempt delivery), so a given seed and
configuration always yield the same event sequence.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field

from .dataplane import Datapath, EtherFrame, MgmtKind, StationState

US = 1_000_000
MAX_ATTEMPTS = 3
KEEPALIVE_BYTES = 64


def to_us(seconds: float) -> int:
    return round(seconds * US)


@dataclass
class PathLoss:
    pl0_db: float = 40.0
    d0_m: float = 1.0
    exponent_n: float = 3.0
    shadow_sigma_db: float = 2.0
    min_distance_m: float = 0.1

    def __post_init__(self):
        if self.exponent_n <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.d0_m <= 0:
            raise ValueError("reference distance must be positive")

    def loss_db(self, distance_m: float) -> float:
        d = max(distance_m, self.min_distance_m)
        return self.pl0_db + 10.0 * self.exponent_n * math.log10(d / self.d0_m)


def delivery_probability(rssi_dbm: float, good_dbm: float = -70.0, dead_dbm: float = -90.0) -> float:
    """Per-attempt success: 1 above ``good_dbm``, linear to 0 at ``dead_dbm``."""
    if rssi_dbm >= good_dbm:
        return 1.0
    if rssi_dbm <= dead_dbm:
        return 0.0
    return (rssi_dbm - dead_dbm) / (good_dbm - dead_dbm)


@dataclass
class MobilityPlan:
    """Piecewise-linear path through ``(time_s, (x, y))`` waypoints.

    Before the first waypoint the station sits at the first position; after
    the last it stays at the last one.
    """

    waypoints: list[tuple[float, tuple[float, float]]]

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("mobility plan needs at least one waypoint")
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")
        self._times = times

    @classmethod
    def stationary(cls, pos: tuple[float, float]) -> MobilityPlan:
        return cls([(0.0, pos)])

    def position_at(self, t_s: float) -> tuple[float, float]:
        wp = self.waypoints
        if t_s <= wp[0][0]:
            return wp[0][1]
        if t_s >= wp[-1][0]:
            return wp[-1][1]
        i = bisect.bisect_right(self._times, t_s)
        (t0, (x0, y0)), (t1, (x1, y1)) = wp[i - 1], wp[i]
        a = (t_s - t0) / (t1 - t0)
        return (x0 + a * (x1 - x0), y0 + a * (y1 - y0))


@dataclass
class RoamParams:
    roam_threshold_dbm: float = -75.0
    hysteresis_db: float = 5.0
    scan_interval_s: float = 0.5
    scan_duration_s: float = 0.2
    auth_assoc_delay_s: float = 0.05
    upstream_keepalive_s: float = 1.0
    consecutive_scans: int = 2
    disassoc_on_roam: bool = True


@dataclass
class RadioAP:
    """One AP instance (a wireless logical port) placed in the world."""

    name: str
    datapath: Datapath
    lport: int
    position: tuple[float, float]

    @property
    def alive(self) -> bool:
        return self.lport in self.datapath.lports

    @property
    def tx_power_dbm(self) -> float:
        return self.datapath.lport_phys(self.lport).tx_power_dbm

    @property
    def ssid(self) -> str:
        return self.datapath.lports[self.lport].ssid


@dataclass
class StationAgent:
    mac: bytes
    ssid: str
    plan: MobilityPlan
    params: RoamParams = field(default_factory=RoamParams)
    uplink_dst: bytes = b"\xff" * 6
    serving: RadioAP | None = None
    position: tuple[float, float] = (0.0, 0.0)
    # station-side mirror of which APs it is authenticated with
    authenticated: set[str] = field(default_factory=set)
    ever_associated: bool = False
    consecutive: int = 0
    next_scan_us: int | None = None
    pending: tuple[int, RadioAP, bool] | None = None  # (due_us, target, reassoc)
    next_keepalive_us: int | None = None
    uplink_seq: int = 0


@dataclass(frozen=True)
class RadioEvent:
    """Something the radio did during a step.

    ``kind`` is ``"mgmt"`` (a management frame handed to an AP), ``"uplink"``
    (a data frame from a station entering an AP's logical port) or
    ``"roam"`` (a station committing to a new AP).
    """

    at_us: int
    kind: str
    sta: bytes
    ap: str
    mgmt: MgmtKind | None = None
    rssi_dbm: float | None = None
    frame: EtherFrame | None = None
    lport: int | None = None
    datapath_id: int | None = None


@dataclass(frozen=True)
class Delivered:
    attempts: int


@dataclass(frozen=True)
class Failed:
    attempts: int


class RadioWorld:
    def __init__(
        self,
        pathloss: PathLoss | None = None,
        seed: int = 0,
        noise: bool = True,
        rx_sensitivity_dbm: float = -90.0,
        roaming: bool = True,
    ):
        self.pathloss = pathloss or PathLoss()
        self.seed = seed
        self.noise = noise
        self.rx_sensitivity_dbm = rx_sensitivity_dbm
        self.roaming = roaming
        self.aps: dict[str, RadioAP] = {}
        self.stations: dict[bytes, StationAgent] = {}
        self._shadow_rng = random.Random(f"{seed}:shadow")
        self._delivery_rng = random.Random(f"{seed}:delivery")
        self.now_us = 0

    # -- setup ---------------------------------------------------------------

    def add_ap(self, ap: RadioAP) -> RadioAP:
        self.aps[ap.name] = ap
        ap.datapath.drop_listeners.append(lambda lport, mac, ap=ap: self._on_drop(ap, lport, mac))
        return ap

    def add_station(self, sta: StationAgent) -> StationAgent:
        self.stations[sta.mac] = sta
        sta.position = sta.plan.position_at(self.now_us / US)
        if sta.next_scan_us is None and sta.serving is None and sta.pending is None:
            sta.next_scan_us = self.now_us
        return sta

    def _on_drop(self, ap: RadioAP, lport: int, mac: bytes) -> None:
        sta = self.stations.get(mac)
        if sta is None or ap.lport != lport:
            return
        sta.authenticated.discard(ap.name)
        if sta.serving is ap:
            sta.serving = None
            sta.next_keepalive_us = None
            sta.consecutive = 0
            sta.next_scan_us = self.now_us

    # -- propagation -----------------------------------------------------------

    def rssi_at(self, ap: RadioAP, sta_position: tuple[float, float], with_noise: bool = False) -> float:
        dx = sta_position[0] - ap.position[0]
        dy = sta_position[1] - ap.position[1]
        rssi = ap.tx_power_dbm - self.pathloss.loss_db(math.hypot(dx, dy))
        if with_noise and self.pathloss.shadow_sigma_db > 0:
            rssi += self._shadow_rng.gauss(0.0, self.pathloss.shadow_sigma_db)
        return rssi

    def _measure(self, ap: RadioAP, sta: StationAgent) -> float:
        return self.rssi_at(ap, sta.position, with_noise=self.noise)

    # -- stepping --------------------------------------------------------------

    def step(self, dt_us: int) -> list[RadioEvent]:
        if dt_us <= 0:
            raise ValueError("dt must be positive")
        self.now_us += dt_us
        events: list[RadioEvent] = []
        for mac in sorted(self.stations):
            self._step_station(self.stations[mac], events)
        return events

    def _mgmt(self, ap: RadioAP, sta: StationAgent, kind: MgmtKind, rssi: float | None, events: list) -> list:
        events.append(RadioEvent(self.now_us, "mgmt", sta.mac, ap.name, kind, rssi, lport=ap.lport))
        return ap.datapath.handle_mgmt(kind, sta.mac, rssi, ap.lport)

    def _step_station(self, sta: StationAgent, events: list[RadioEvent]) -> None:
        now = self.now_us
        p = sta.params
        sta.position = sta.plan.position_at(now / US)

        if sta.serving is not None:
            if not sta.serving.alive:
                sta.serving = None
            else:
                sta.serving.datapath.observe_rssi(sta.serving.lport, sta.mac, self._measure(sta.serving, sta))

        if sta.pending is not None and sta.pending[0] <= now:
            self._join(sta, events)

        if sta.serving is not None and sta.next_keepalive_us is not None and now >= sta.next_keepalive_us:
            sta.next_keepalive_us += to_us(p.upstream_keepalive_s)
            sta.uplink_seq += 1
            frame = EtherFrame(sta.mac, sta.uplink_dst, KEEPALIVE_BYTES, sta.uplink_seq, now)
            ap = sta.serving
            events.append(
                RadioEvent(now, "uplink", sta.mac, ap.name, frame=frame, lport=ap.lport, datapath_id=ap.datapath.datapath_id)
            )

        if sta.pending is not None or sta.next_scan_us is None or now < sta.next_scan_us:
            return
        if sta.serving is not None:
            if not self.roaming:
                return
            serving_rssi = self.rssi_at(sta.serving, sta.position)
            if serving_rssi >= p.roam_threshold_dbm:
                sta.consecutive = 0
                sta.next_scan_us = now + 1  # re-check next step
                return
            best, best_rssi = self._scan(sta, events, exclude=sta.serving)
            sta.next_scan_us = now + to_us(p.scan_interval_s)
            if best is not None and best_rssi > serving_rssi + p.hysteresis_db:
                sta.consecutive += 1
            else:
                sta.consecutive = 0
            if sta.consecutive >= p.consecutive_scans:
                self._commit_roam(sta, best, events)
        else:
            best, _ = self._scan(sta, events, exclude=None)
            sta.next_scan_us = now + to_us(p.scan_interval_s)
            if best is not None:
                due = now + to_us(p.scan_duration_s + p.auth_assoc_delay_s)
                sta.pending = (due, best, False)
                sta.next_scan_us = None

    def _scan(self, sta: StationAgent, events: list, exclude: RadioAP | None) -> tuple[RadioAP | None, float]:
        best, best_rssi = None, -math.inf
        for name in sorted(self.aps):
            ap = self.aps[name]
            if not ap.alive or ap.ssid != sta.ssid:
                continue
            rssi = self._measure(ap, sta)
            if rssi < self.rx_sensitivity_dbm:
                continue
            self._mgmt(ap, sta, MgmtKind.PROBE, rssi, events)
            if ap is exclude:
                continue
            if rssi > best_rssi:
                best, best_rssi = ap, rssi
        return best, best_rssi

    def _commit_roam(self, sta: StationAgent, target: RadioAP, events: list) -> None:
        old = sta.serving
        now = self.now_us
        events.append(RadioEvent(now, "roam", sta.mac, target.name))
        if old is not None:
            if sta.params.disassoc_on_roam:
                self._mgmt(old, sta, MgmtKind.DISASSOC, None, events)
            else:
                # old AP purges the station silently once it leaves
                old.datapath.lports[old.lport].stations.pop(sta.mac, None)
                sta.authenticated.discard(old.name)
        sta.serving = None
        sta.next_keepalive_us = None
        sta.consecutive = 0
        sta.next_scan_us = None
        due = now + to_us(sta.params.scan_duration_s + sta.params.auth_assoc_delay_s)
        sta.pending = (due, target, True)

    def _join(self, sta: StationAgent, events: list) -> None:
        _, ap, reassoc = sta.pending
        sta.pending = None
        if not ap.alive:
            sta.next_scan_us = self.now_us
            return
        lport = ap.datapath.lports[ap.lport]
        if ap.name not in sta.authenticated or lport.state_of(sta.mac) == StationState.NOT_AUTHENTICATED:
            self._mgmt(ap, sta, MgmtKind.AUTH, None, events)
            sta.authenticated.add(ap.name)
        kind = MgmtKind.REASSOC if (reassoc and sta.ever_associated) else MgmtKind.ASSOC
        self._mgmt(ap, sta, kind, None, events)
        if lport.state_of(sta.mac) == StationState.AUTHORIZED:
            sta.serving = ap
            sta.ever_associated = True
            sta.next_keepalive_us = self.now_us + to_us(sta.params.upstream_keepalive_s)
            sta.next_scan_us = self.now_us + to_us(sta.params.scan_interval_s)
            sta.consecutive = 0
        else:
            sta.next_scan_us = self.now_us

    # -- data delivery ---------------------------------------------------------

    def deliver_wireless(self, ap: RadioAP, sta_mac: bytes, frame: EtherFrame) -> Delivered | Failed:
        sta = self.stations.get(sta_mac)
        dp = ap.datapath
        if sta is None or sta.serving is not ap or not dp.is_deliverable(ap.lport, sta_mac):
            return Failed(0)
        p = delivery_probability(self.rssi_at(ap, sta.position))
        if p >= 1.0:
            dp.record_tx(ap.lport, sta_mac, frame.length_bytes)
            return Delivered(1)
        for attempt in range(1, MAX_ATTEMPTS + 1):
            if p > 0.0 and self._delivery_rng.random() < p:
                dp.record_retries(ap.lport, attempt - 1, failed=False)
                dp.record_tx(ap.lport, sta_mac, frame.length_bytes)
                return Delivered(attempt)
        dp.record_retries(ap.lport, MAX_ATTEMPTS, failed=True)
        return Failed(MAX_ATTEMPTS)
