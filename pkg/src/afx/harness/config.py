"""Topology / experiment configuration loading and validation.

The file is YAML with top-level sections ``experiment``, ``control``,
``app``, ``radio``, ``nodes``, ``links`` and ``traffic``. Anything missing
falls back to the shipped defaults, so a file only needs the keys it
changes. Errors name the offending key path, e.g. ``nodes.aps.ap1.position``.
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..dataplane import PhysCaps
from ..radio import MobilityPlan, PathLoss, RoamParams
from ..wire import Dot11Version, Security, mac_from_str


class ConfigError(ValueError):
    def __init__(self, key_path: str, problem: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {problem}")


class RunMode(enum.Enum):
    BRIDGE = "bridge"
    AETHERFLOW = "aetherflow"


def default_topology_path() -> Path:
    return Path(str(resources.files("afx") / "data" / "default_topology.yaml"))


def _load_defaults() -> dict:
    with open(default_topology_path()) as fh:
        return yaml.safe_load(fh)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class _Reader:
    """Typed access into nested dicts that reports full key paths."""

    def __init__(self, data: Any, path: str):
        self.data = data
        self.path = path

    def sub(self, key: str) -> _Reader:
        if not isinstance(self.data, dict):
            raise ConfigError(self.path, "expected a mapping")
        if key not in self.data:
            raise ConfigError(self._p(key), "missing")
        return _Reader(self.data[key], self._p(key))

    def opt(self, key: str) -> _Reader | None:
        if not isinstance(self.data, dict) or key not in self.data or self.data[key] is None:
            return None
        return _Reader(self.data[key], self._p(key))

    def _p(self, key) -> str:
        return f"{self.path}.{key}" if self.path else str(key)

    def items(self):
        if not isinstance(self.data, dict):
            raise ConfigError(self.path, "expected a mapping")
        return [(k, _Reader(v, self._p(k))) for k, v in self.data.items()]

    def seq(self):
        if not isinstance(self.data, list):
            raise ConfigError(self.path, "expected a list")
        return [_Reader(v, self._p(i)) for i, v in enumerate(self.data)]

    def num(self, key: str, default=None) -> float:
        r = self.opt(key)
        if r is None:
            if default is None:
                raise ConfigError(self._p(key), "missing")
            return default
        v = r.data
        if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(r.path, f"expected a number, got {v!r}")
        return float(v)

    def int(self, key: str, default=None) -> int:
        v = self.num(key, default)
        if v != int(v):
            raise ConfigError(self._p(key), f"expected an integer, got {v!r}")
        return int(v)

    def str(self, key: str, default=None) -> str:
        r = self.opt(key)
        if r is None:
            if default is None:
                raise ConfigError(self._p(key), "missing")
            return default
        if not isinstance(r.data, str):
            raise ConfigError(r.path, f"expected a string, got {r.data!r}")
        return r.data

    def bool(self, key: str, default: bool) -> bool:
        r = self.opt(key)
        if r is None:
            return default
        if not isinstance(r.data, bool):
            raise ConfigError(r.path, f"expected true/false, got {r.data!r}")
        return r.data

    def mac(self, key: str) -> bytes:
        text = self.str(key)
        try:
            return mac_from_str(text)
        except ValueError:
            raise ConfigError(self._p(key), f"bad MAC address {text!r}") from None

    def point(self, key: str) -> tuple[float, float]:
        r = self.sub(key)
        if not isinstance(r.data, (list, tuple)) or len(r.data) != 2:
            raise ConfigError(r.path, "expected [x, y]")
        try:
            return (float(r.data[0]), float(r.data[1]))
        except (TypeError, ValueError):
            raise ConfigError(r.path, "expected numeric [x, y]") from None


@dataclass
class LportSpec:
    ssid: str
    bssid: bytes
    security: Security = Security.OPEN


@dataclass
class RadioSpec:
    port: int
    dot11_version: Dot11Version
    channel: int
    tx_power_dbm: int
    caps: PhysCaps
    lports: list[LportSpec]


@dataclass
class SwitchSpec:
    name: str
    datapath_id: int
    ports: list[int]


@dataclass
class ApSpec:
    name: str
    datapath_id: int
    ports: list[int]
    uplink_port: int
    position: tuple[float, float]
    radios: list[RadioSpec]


@dataclass
class HostSpec:
    name: str
    mac: bytes


@dataclass
class StationSpec:
    name: str
    mac: bytes
    ssid: str
    uplink_dst: str
    join_at_s: float
    plan: MobilityPlan
    roam: RoamParams


@dataclass
class LinkSpec:
    a: tuple[str, int]
    b: tuple[str, int]
    latency_s: float
    capacity_bps: float


@dataclass
class ExperimentConfig:
    mode: RunMode = RunMode.AETHERFLOW
    predictor: str = "fixed"
    seed: int = 0
    duration_s: float = 30.0
    offered_load_bps: float = 9_000_000.0
    datagram_payload_bytes: int = 1470
    measure_interval_s: float = 0.5
    handoff_threshold_bps: float = 8_000_000.0
    handoff_window_start_s: float = 7.0
    loss_window_s: tuple[float, float] = (7.0, 15.0)
    warmup_s: float = 1.0
    tick_s: float = 0.01
    transport: str = "inproc"
    topology_path: str | None = None

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError("experiment.duration_s", "must be positive")
        if self.measure_interval_s <= 0:
            raise ConfigError("experiment.measure_interval_s", "must be positive")
        n = self.duration_s / self.measure_interval_s
        if abs(n - round(n)) > 1e-9:
            raise ConfigError("experiment.measure_interval_s", "must divide duration_s")
        if self.offered_load_bps < 0:
            raise ConfigError("experiment.offered_load_bps", "must be non-negative")
        if self.offered_load_bps > 0 and not self.handoff_threshold_bps < self.offered_load_bps:
            raise ConfigError("experiment.handoff_threshold_bps", "must be below offered_load_bps")
        if not 0 < self.datagram_payload_bytes <= 1472:
            raise ConfigError("experiment.datagram_payload_bytes", "must be in 1..1472")
        if self.tick_s <= 0 or round(self.measure_interval_s / self.tick_s, 9) % 1:
            raise ConfigError("experiment.tick_s", "must divide measure_interval_s")
        if self.predictor not in ("fixed", "trend"):
            raise ConfigError("app.predictor", f"unknown predictor {self.predictor!r}")
        if self.transport not in ("inproc", "tcp"):
            raise ConfigError("control.transport", f"unknown transport {self.transport!r}")


@dataclass
class AppSpec:
    predictor: str
    fixed_t_fire_s: float
    fixed_sta: str
    fixed_from: str
    fixed_to: str
    margin_db: float
    timeout_s: float


@dataclass
class TopologyConfig:
    experiment: ExperimentConfig
    control_latency_s: float
    poll_period_s: float
    app: AppSpec
    pathloss: PathLoss
    noise: bool
    roaming: bool
    rx_sensitivity_dbm: float
    air_latency_s: float
    switches: list[SwitchSpec]
    aps: list[ApSpec]
    hosts: list[HostSpec]
    stations: list[StationSpec]
    links: list[LinkSpec]
    traffic_source: str
    traffic_sink: str
    raw: dict = field(repr=False, default_factory=dict)

    def node_names(self) -> set[str]:
        return {n.name for n in (*self.switches, *self.aps, *self.hosts, *self.stations)}

    def datapath_by_name(self, name: str):
        for n in (*self.switches, *self.aps):
            if n.name == name:
                return n
        return None


def _caps(r: _Reader | None) -> PhysCaps:
    if r is None:
        return PhysCaps()
    d = PhysCaps()
    try:
        versions = frozenset(Dot11Version[v] for v in r.data.get("versions", [v.name for v in d.versions]))
    except KeyError as exc:
        raise ConfigError(r.path + ".versions", f"unknown version {exc}") from None
    chans = r.data.get("channels", sorted(d.channels))
    if not all(isinstance(c, int) and 1 <= c <= 16 for c in chans):
        raise ConfigError(r.path + ".channels", "channels must be integers 1..16")
    try:
        sec = frozenset(Security[s.upper()] for s in r.data.get("security", [s.name for s in d.security]))
    except KeyError as exc:
        raise ConfigError(r.path + ".security", f"unknown method {exc}") from None
    caps = PhysCaps(
        versions=versions,
        channels=frozenset(chans),
        tx_power_min_dbm=r.int("tx_power_min_dbm", d.tx_power_min_dbm),
        tx_power_max_dbm=r.int("tx_power_max_dbm", d.tx_power_max_dbm),
        security=sec,
        max_aps=r.int("max_aps", d.max_aps),
    )
    if caps.max_aps < 1:
        raise ConfigError(r.path + ".max_aps", "must be at least 1")
    return caps


def _endpoint(r: _Reader, key: str) -> tuple[str, int]:
    text = r.str(key)
    if ":" in text:
        name, port = text.rsplit(":", 1)
        try:
            return name, int(port)
        except ValueError:
            raise ConfigError(f"{r.path}.{key}", f"bad port in {text!r}") from None
    return text, 0


def parse_topology(data: dict, *, merge_defaults: bool = True) -> TopologyConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    if merge_defaults:
        defaults = _load_defaults()
        # node and link tables replace the defaults wholesale
        base = {k: v for k, v in defaults.items() if k not in ("nodes", "links") or k not in data}
        data = _merge(base, data)
    root = _Reader(data, "")

    ex = root.sub("experiment")
    ctl = root.opt("control") or _Reader({}, "control")
    exp = ExperimentConfig(
        duration_s=ex.num("duration_s", 30.0),
        offered_load_bps=ex.num("offered_load_bps", 9e6),
        datagram_payload_bytes=ex.int("datagram_payload_bytes", 1470),
        measure_interval_s=ex.num("measure_interval_s", 0.5),
        handoff_threshold_bps=ex.num("handoff_threshold_bps", 8e6),
        handoff_window_start_s=ex.num("handoff_window_start_s", 7.0),
        warmup_s=ex.num("warmup_s", 1.0),
        tick_s=ex.num("tick_s", 0.01),
        seed=ex.int("seed", 0),
        transport=ctl.str("transport", "inproc"),
    )
    lw = ex.opt("loss_window_s")
    if lw is not None:
        if not isinstance(lw.data, list) or len(lw.data) != 2:
            raise ConfigError(lw.path, "expected [start, end]")
        exp.loss_window_s = (float(lw.data[0]), float(lw.data[1]))
    mode = ex.str("mode", "aetherflow")
    try:
        exp.mode = RunMode(mode)
    except ValueError:
        raise ConfigError("experiment.mode", f"unknown mode {mode!r}") from None

    appr = root.sub("app")
    fixed = appr.opt("fixed") or _Reader({}, "app.fixed")
    app = AppSpec(
        predictor=appr.str("predictor", "fixed"),
        fixed_t_fire_s=fixed.num("t_fire_s", 7.0),
        fixed_sta=fixed.str("sta", ""),
        fixed_from=fixed.str("from", ""),
        fixed_to=fixed.str("to", ""),
        margin_db=(appr.opt("trend") or _Reader({}, "app.trend")).num("margin_db", 3.0),
        timeout_s=(appr.opt("multicast") or _Reader({}, "app.multicast")).num("timeout_s", 15.0),
    )
    exp.predictor = app.predictor

    rr = root.sub("radio")
    try:
        pathloss = PathLoss(
            pl0_db=rr.num("pl0_db", 40.0),
            d0_m=rr.num("d0_m", 1.0),
            exponent_n=rr.num("exponent_n", 3.0),
            shadow_sigma_db=rr.num("shadow_sigma_db", 2.0),
            min_distance_m=rr.num("min_distance_m", 0.1),
        )
    except ValueError as exc:
        raise ConfigError("radio", str(exc)) from None

    nodes = root.sub("nodes")
    switches = []
    for name, r in (nodes.opt("switches") or _Reader({}, "nodes.switches")).items():
        switches.append(SwitchSpec(name, r.int("datapath_id"), [int(p) for p in r.sub("ports").data]))
    aps = []
    for name, r in (nodes.opt("aps") or _Reader({}, "nodes.aps")).items():
        radios = []
        for rad in r.sub("radios").seq():
            lports = []
            for lp in rad.sub("lports").seq():
                sec_name = lp.str("security", "open").upper()
                if sec_name not in Security.__members__:
                    raise ConfigError(lp.path + ".security", f"unknown method {sec_name!r}")
                lports.append(LportSpec(lp.str("ssid"), lp.mac("bssid"), Security[sec_name]))
            ver = rad.str("dot11_version", "N")
            if ver not in Dot11Version.__members__:
                raise ConfigError(rad.path + ".dot11_version", f"unknown version {ver!r}")
            radios.append(
                RadioSpec(
                    rad.int("port"),
                    Dot11Version[ver],
                    rad.int("channel", 1),
                    rad.int("tx_power_dbm", 20),
                    _caps(rad.opt("caps")),
                    lports,
                )
            )
        aps.append(
            ApSpec(
                name,
                r.int("datapath_id"),
                [int(p) for p in r.sub("ports").data],
                r.int("uplink_port"),
                r.point("position"),
                radios,
            )
        )
    hosts = [HostSpec(n, r.mac("mac")) for n, r in (nodes.opt("hosts") or _Reader({}, "nodes.hosts")).items()]
    stations = []
    for name, r in (nodes.opt("stations") or _Reader({}, "nodes.stations")).items():
        wps = []
        for w in r.sub("waypoints").seq():
            if not isinstance(w.data, list) or len(w.data) != 2 or len(w.data[1]) != 2:
                raise ConfigError(w.path, "expected [time_s, [x, y]]")
            wps.append((float(w.data[0]), (float(w.data[1][0]), float(w.data[1][1]))))
        try:
            plan = MobilityPlan(wps)
        except ValueError as exc:
            raise ConfigError(r.path + ".waypoints", str(exc)) from None
        ro = r.opt("roam") or _Reader({}, r.path + ".roam")
        d = RoamParams()
        roam = RoamParams(
            roam_threshold_dbm=ro.num("roam_threshold_dbm", d.roam_threshold_dbm),
            hysteresis_db=ro.num("hysteresis_db", d.hysteresis_db),
            scan_interval_s=ro.num("scan_interval_s", d.scan_interval_s),
            scan_duration_s=ro.num("scan_duration_s", d.scan_duration_s),
            auth_assoc_delay_s=ro.num("auth_assoc_delay_s", d.auth_assoc_delay_s),
            upstream_keepalive_s=ro.num("upstream_keepalive_s", d.upstream_keepalive_s),
            consecutive_scans=ro.int("consecutive_scans", d.consecutive_scans),
            disassoc_on_roam=ro.bool("disassoc_on_roam", d.disassoc_on_roam),
        )
        stations.append(
            StationSpec(name, r.mac("mac"), r.str("ssid"), r.str("uplink_dst", ""), r.num("join_at_s", -0.75), plan, roam)
        )
    links = []
    for lr in root.sub("links").seq():
        links.append(
            LinkSpec(_endpoint(lr, "a"), _endpoint(lr, "b"), lr.num("latency_s", 0.0001), lr.num("capacity_bps", 1e8))
        )
    tr = root.sub("traffic")
    cfg = TopologyConfig(
        experiment=exp,
        control_latency_s=ctl.num("latency_s", 0.001),
        poll_period_s=ctl.num("poll_period_s", 0.5),
        app=app,
        pathloss=pathloss,
        noise=rr.bool("noise", True),
        roaming=rr.bool("roaming", True),
        rx_sensitivity_dbm=rr.num("rx_sensitivity_dbm", -90.0),
        air_latency_s=rr.num("air_latency_s", 0.0002),
        switches=switches,
        aps=aps,
        hosts=hosts,
        stations=stations,
        links=links,
        traffic_source=tr.str("source"),
        traffic_sink=tr.str("sink"),
        raw=data,
    )
    validate_topology(cfg)
    exp.validate()
    return cfg


def validate_topology(cfg: TopologyConfig) -> None:
    names: dict[str, str] = {}
    for kind, group in (("switch", cfg.switches), ("ap", cfg.aps), ("host", cfg.hosts), ("station", cfg.stations)):
        for n in group:
            if n.name in names:
                raise ConfigError(f"nodes.{kind}s.{n.name}", f"name already used by a {names[n.name]}")
            names[n.name] = kind
    dpids = [n.datapath_id for n in (*cfg.switches, *cfg.aps)]
    if len(set(dpids)) != len(dpids):
        raise ConfigError("nodes", "datapath_id values must be unique")
    if len(cfg.switches) != 1:
        raise ConfigError("nodes.switches", "exactly one switch is supported")
    bssids = set()
    for ap in cfg.aps:
        base = f"nodes.aps.{ap.name}"
        if ap.uplink_port not in ap.ports:
            raise ConfigError(base + ".uplink_port", "not one of the AP's wired ports")
        if not ap.radios:
            raise ConfigError(base + ".radios", "an AP needs at least one radio")
        all_ports = ap.ports + [r.port for r in ap.radios]
        if sorted(all_ports) != list(range(1, len(all_ports) + 1)):
            raise ConfigError(base, "physical ports (wired + radios) must be numbered 1..n")
        for i, rad in enumerate(ap.radios):
            rp = f"{base}.radios.{i}"
            if rad.channel not in rad.caps.channels:
                raise ConfigError(rp + ".channel", f"{rad.channel} not in supported channels")
            if rad.dot11_version not in rad.caps.versions:
                raise ConfigError(rp + ".dot11_version", "not in supported versions")
            if len(rad.lports) > rad.caps.max_aps:
                raise ConfigError(rp + ".lports", f"more than max_aps={rad.caps.max_aps}")
            for lp in rad.lports:
                if lp.bssid in bssids:
                    raise ConfigError(rp + ".lports", f"duplicate bssid")
                bssids.add(lp.bssid)
    for sw in cfg.switches:
        if sorted(sw.ports) != list(range(1, len(sw.ports) + 1)):
            raise ConfigError(f"nodes.switches.{sw.name}.ports", "must be numbered 1..n")
    for i, link in enumerate(cfg.links):
        for end, key in ((link.a, "a"), (link.b, "b")):
            name, port = end
            kind = names.get(name)
            if kind is None:
                raise ConfigError(f"links.{i}.{key}", f"unknown node {name!r}")
            if kind in ("switch", "ap"):
                node = cfg.datapath_by_name(name)
                if port not in node.ports:
                    raise ConfigError(f"links.{i}.{key}", f"{name} has no wired port {port}")
            elif kind == "station":
                raise ConfigError(f"links.{i}.{key}", "stations attach wirelessly, not by link")
        if link.latency_s < 0 or link.capacity_bps <= 0:
            raise ConfigError(f"links.{i}", "latency must be >= 0 and capacity > 0")
    if names.get(cfg.traffic_source) != "host":
        raise ConfigError("traffic.source", f"{cfg.traffic_source!r} is not a host")
    if names.get(cfg.traffic_sink) != "station":
        raise ConfigError("traffic.sink", f"{cfg.traffic_sink!r} is not a station")
    for st in cfg.stations:
        if st.uplink_dst and names.get(st.uplink_dst) != "host":
            raise ConfigError(f"nodes.stations.{st.name}.uplink_dst", f"{st.uplink_dst!r} is not a host")
    if cfg.app.predictor == "fixed":
        for key, want in (("sta", "station"), ("from", "ap"), ("to", "ap")):
            val = getattr(cfg.app, f"fixed_{key}")
            if names.get(val) != want:
                raise ConfigError(f"app.fixed.{key}", f"{val!r} is not a {want}")


def load_topology(path: str | Path | None = None, overrides: dict | None = None) -> TopologyConfig:
    """Load a topology file (or only the defaults) and apply ``overrides``."""
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    if overrides:
        data = _merge(data, overrides)
    cfg = parse_topology(data)
    if path is not None:
        cfg.experiment.topology_path = str(path)
    return cfg


def with_run_options(cfg: TopologyConfig, **kw) -> TopologyConfig:
    """Copy of ``cfg`` with experiment fields replaced (mode, seed, ...)."""
    new = copy.copy(cfg)
    new.experiment = replace(cfg.experiment, **kw)
    if "predictor" in kw:
        new.app = replace(cfg.app, predictor=kw["predictor"])
    new.experiment.validate()
    return new
