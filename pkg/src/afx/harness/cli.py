"""``afx`` command line: run, compare, decode, topo-check.

Exit status is 0 on success, 2 for configuration or usage problems and 3
when something fails while running.
"""

from __future__ import annotations

import argparse
import logging
import string
import sys
from pathlib import Path

from .. import wire
from .config import ConfigError, RunMode, load_topology, with_run_options

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="afx", description="Wireless SDN fast-handoff simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", type=Path, help="topology/experiment YAML (default: shipped testbed)")
    run.add_argument("--mode", choices=[m.value for m in RunMode])
    run.add_argument("--predictor", choices=["fixed", "trend"])
    run.add_argument("--seed", type=int)
    run.add_argument("--duration", type=float, help="seconds")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--tcp", action="store_true", help="carry control traffic over loopback TCP")

    cmp = sub.add_parser("compare", help="bridge vs AetherFlow over several seeds")
    cmp.add_argument("--config", type=Path)
    cmp.add_argument("--rounds", type=int, default=5)
    cmp.add_argument("--base-seed", type=int, default=0)
    cmp.add_argument("--predictor", choices=["fixed", "trend"])
    cmp.add_argument("--out", type=Path, required=True)

    dec = sub.add_parser("decode", help="dump protocol messages from a hex or binary file")
    dec.add_argument("file", type=Path)

    topo = sub.add_parser("topo-check", help="validate a topology file and list its inventory")
    topo.add_argument("file", type=Path)
    return p


def _run_overrides(args) -> dict:
    kw = {}
    if getattr(args, "mode", None):
        kw["mode"] = RunMode(args.mode)
    if args.predictor:
        kw["predictor"] = args.predictor
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        kw["duration_s"] = args.duration
    if getattr(args, "tcp", False):
        kw["transport"] = "tcp"
    return kw


def cmd_run(args) -> int:
    from .experiment import run_experiment
    from .report import emit_run

    cfg = with_run_options(load_topology(args.config), **_run_overrides(args))
    result = run_experiment(cfg)
    emit_run(result, args.out)
    e = cfg.experiment
    dip = "none" if result.dip_start_s is None else f"{result.dip_start_s:g}s"
    print(
        f"{e.mode.value} seed={e.seed}: handoff_duration={result.handoff_duration_s:g}s dip_start={dip} "
        f"lost[{e.loss_window_s[0]:g},{e.loss_window_s[1]:g})={result.lost_in_window} -> {args.out}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    from .report import compare_modes, emit_comparison

    if args.rounds < 1:
        raise ConfigError("--rounds", "must be at least 1")
    cfg = with_run_options(load_topology(args.config), **_run_overrides(args))
    cmp = compare_modes(cfg, args.rounds, args.base_seed)
    emit_comparison(cmp, args.out)
    b = cmp.mean_duration(RunMode.BRIDGE)
    a = cmp.mean_duration(RunMode.AETHERFLOW)
    print(f"mean handoff duration: bridge={b:g}s aetherflow={a:g}s over {args.rounds} rounds -> {args.out}")
    return EXIT_OK


def _read_messages(path: Path) -> bytes:
    data = path.read_bytes()
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        return data
    compact = "".join(text.split())
    if compact and all(c in string.hexdigits for c in compact):
        if len(compact) % 2:
            raise ValueError("odd number of hex digits")
        return bytes.fromhex(compact)
    return data


def cmd_decode(args) -> int:
    try:
        buf = _read_messages(args.file)
    except OSError as exc:
        print(f"afx decode: {exc.strerror}: {args.file}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"afx decode: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        frames, rest = wire.frame_split(buf)
    except wire.DecodeError as exc:
        print(f"afx decode: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    status = EXIT_OK
    for f in frames:
        try:
            print(wire.dump(wire.decode(f)))
        except wire.DecodeError as exc:
            print(f"afx decode: {exc}", file=sys.stderr)
            status = EXIT_RUNTIME
    if rest:
        print(f"afx decode: {len(rest)} trailing bytes do not form a complete message", file=sys.stderr)
        status = EXIT_RUNTIME
    return status


def cmd_topo_check(args) -> int:
    cfg = load_topology(args.file)
    print(f"ok: {args.file}")
    for sw in cfg.switches:
        print(f"switch {sw.name} dpid={sw.datapath_id} ports={sw.ports}")
    for ap in cfg.aps:
        radios = ", ".join(
            f"port {r.port} ch{r.channel} {r.dot11_version.name} {r.tx_power_dbm}dBm "
            f"ssids={[lp.ssid for lp in r.lports]}"
            for r in ap.radios
        )
        print(f"ap {ap.name} dpid={ap.datapath_id} at {ap.position} uplink={ap.uplink_port} radios: {radios}")
    for h in cfg.hosts:
        print(f"host {h.name} mac={wire.mac_to_str(h.mac)}")
    for st in cfg.stations:
        print(f"station {st.name} mac={wire.mac_to_str(st.mac)} ssid={st.ssid} waypoints={len(st.plan.waypoints)}")
    for link in cfg.links:
        print(f"link {link.a[0]}:{link.a[1]} <-> {link.b[0]}:{link.b[1]} {link.latency_s * 1e3:g}ms")
    print(f"traffic {cfg.traffic_source} -> {cfg.traffic_sink}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "decode": cmd_decode, "topo-check": cmd_topo_check}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"afx {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        logging.getLogger("afx").debug("run failed", exc_info=True)
        print(f"afx {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
