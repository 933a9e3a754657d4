"""Output files for single runs and multi-round comparisons."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics
from .config import RunMode, TopologyConfig, with_run_options
from .experiment import ExperimentResult, run_experiment

log = logging.getLogger(__name__)

INTERVALS_HEADER = ["t_start_s", "throughput_bps", "sent", "delivered", "loss_rate"]
DELIVERY_HEADER = ["seq", "sent_us", "delivered_us", "outcome"]
COMPARISON_HEADER = [
    "round",
    "seed",
    "mode",
    "handoff_duration_s",
    "dip_start_s",
    "lost_in_window",
    "sent",
    "delivered",
    "mean_throughput_bps",
]


class IoError(OSError):
    """Writing an output file failed; ``path`` names the file."""

    def __init__(self, path: Path, cause: OSError):
        super().__init__(cause.errno, f"{cause.strerror or cause}: {path}")
        self.path = Path(path)


def _open(path: Path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise IoError(path, exc) from exc


def _mkdir(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(out_dir, exc) from exc


def _csv(path: Path, header: list[str], rows) -> None:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_intervals(path: Path, intervals: list[metrics.IntervalStat]) -> None:
    _csv(path, INTERVALS_HEADER, ([iv.t_start_s, iv.throughput_bps, iv.sent, iv.delivered, iv.loss_rate] for iv in intervals))


def write_delivery_log(path: Path, records: list[metrics.DatagramRecord]) -> None:
    rows = (
        [r.seq, r.sent_us, "" if r.delivered_us is None else r.delivered_us, r.outcome.value] for r in records
    )
    _csv(path, DELIVERY_HEADER, rows)


def read_delivery_log(path: Path) -> list[metrics.DatagramRecord]:
    with open(path, newline="") as fh:
        return [
            metrics.DatagramRecord(
                int(row["seq"]),
                int(row["sent_us"]),
                int(row["delivered_us"]) if row["delivered_us"] else None,
                metrics.Outcome(row["outcome"]),
            )
            for row in csv.DictReader(fh)
        ]


def write_json(path: Path, data: dict) -> None:
    with _open(path) as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_run(result: ExperimentResult, out_dir: Path) -> None:
    _mkdir(out_dir)
    write_intervals(out_dir / "intervals.csv", result.intervals)
    write_delivery_log(out_dir / "delivery_log.csv", result.records)
    write_json(out_dir / "summary.json", result.summary())


@dataclass
class Comparison:
    """Per-round results of both modes. A round whose run raised keeps
    ``None`` for that mode and the message in ``errors``."""

    base_seed: int
    rounds: list[tuple[int, ExperimentResult | None, ExperimentResult | None]]  # (seed, bridge, aetherflow)
    errors: list[tuple[int, str, str]] = field(default_factory=list)  # (round, mode, message)

    def results(self, mode: RunMode) -> list[ExperimentResult]:
        i = 1 if mode is RunMode.BRIDGE else 2
        return [r[i] for r in self.rounds if r[i] is not None]

    def durations(self, mode: RunMode) -> list[float]:
        return [r.handoff_duration_s for r in self.results(mode)]

    def mean_duration(self, mode: RunMode) -> float:
        return metrics.mean(self.durations(mode))

    def median_round(self, mode: RunMode) -> int:
        """Index of the round whose handoff duration is the median for ``mode``
        (lower median, earliest round on ties)."""
        i = 1 if mode is RunMode.BRIDGE else 2
        ok = [k for k, r in enumerate(self.rounds) if r[i] is not None]
        if not ok:
            raise ValueError(f"no successful {mode.value} round")
        order = sorted(ok, key=lambda k: (self.rounds[k][i].handoff_duration_s, k))
        return order[(len(order) - 1) // 2]

    def summary(self) -> dict:
        out = {"base_seed": self.base_seed, "rounds": len(self.rounds), "modes": {}}
        for mode in RunMode:
            res = self.results(mode)
            out["modes"][mode.value] = {
                "handoff_duration_s": self.durations(mode),
                "mean_handoff_duration_s": self.mean_duration(mode),
                "dip_start_s": [r.dip_start_s for r in res],
                "lost_in_window": [r.lost_in_window for r in res],
                "median_round": self.median_round(mode) if res else None,
            }
        out["errors"] = [{"round": k, "mode": m, "message": msg} for k, m, msg in self.errors]
        out["mean_reduction_s"] = self.mean_duration(RunMode.BRIDGE) - self.mean_duration(RunMode.AETHERFLOW)
        return out


def compare_modes(cfg: TopologyConfig, rounds: int, base_seed: int, runner=run_experiment) -> Comparison:
    """Run both modes for seeds ``base_seed .. base_seed + rounds - 1``.

    A failing run is recorded and the remaining rounds still execute.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    cmp = Comparison(base_seed, [])
    for k in range(rounds):
        seed = base_seed + k
        pair = []
        for mode in (RunMode.BRIDGE, RunMode.AETHERFLOW):
            try:
                pair.append(runner(with_run_options(cfg, mode=mode, seed=seed)))
            except Exception as exc:  # noqa: BLE001 - reported per round
                log.warning("round %d (%s, seed %d) failed: %s", k, mode.value, seed, exc)
                cmp.errors.append((k, mode.value, f"{type(exc).__name__}: {exc}"))
                pair.append(None)
        cmp.rounds.append((seed, *pair))
    return cmp


def emit_comparison(cmp: Comparison, out_dir: Path) -> None:
    _mkdir(out_dir)
    rows = []
    for k, (seed, bridge, af) in enumerate(cmp.rounds):
        for mode, res in ((RunMode.BRIDGE, bridge), (RunMode.AETHERFLOW, af)):
            if res is None:
                continue
            rows.append(
                [
                    k,
                    seed,
                    mode.value,
                    res.handoff_duration_s,
                    "" if res.dip_start_s is None else res.dip_start_s,
                    res.lost_in_window,
                    res.totals.sent,
                    res.totals.delivered,
                    metrics.mean(iv.throughput_bps for iv in res.intervals),
                ]
            )
    _csv(out_dir / "comparison.csv", COMPARISON_HEADER, rows)
    for mode in RunMode:
        if cmp.results(mode):
            i = 1 if mode is RunMode.BRIDGE else 2
            best = cmp.rounds[cmp.median_round(mode)][i]
            write_intervals(out_dir / f"intervals_{mode.value}_median.csv", best.intervals)
    write_json(out_dir / "summary.json", cmp.summary())
