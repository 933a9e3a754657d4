"""Per-interval throughput/loss and handoff-duration figures.

Everything here is computed from the datagram delivery log alone, so the
numbers written to ``intervals.csv`` can be re-derived from
``delivery_log.csv`` by anyone.

Conventions:

* ``sent`` and ``delivered`` count datagrams by the interval they were *sent*
  in, so ``loss_rate = 1 - delivered/sent`` stays within [0, 1];
* ``throughput_bps`` is payload bits *received* during the interval divided
  by the interval length.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .. import kernels


class Outcome(enum.Enum):
    DELIVERED = "delivered"
    DROPPED = "dropped"
    IN_FLIGHT = "in_flight"


@dataclass(frozen=True)
class DatagramRecord:
    seq: int
    sent_us: int
    delivered_us: int | None
    outcome: Outcome


@dataclass(frozen=True)
class IntervalStat:
    t_start_s: float
    throughput_bps: float
    sent: int
    delivered: int
    loss_rate: float


@dataclass(frozen=True)
class Totals:
    sent: int
    delivered: int
    dropped: int
    in_flight: int

    @property
    def conserved(self) -> bool:
        return self.sent == self.delivered + self.dropped + self.in_flight


def compute_intervals(
    records: list[DatagramRecord], duration_us: int, interval_us: int, payload_bytes: int
) -> list[IntervalStat]:
    n = duration_us // interval_us
    sent_t = [r.sent_us for r in records]
    ones = [1] * len(records)
    sent, _ = kernels.bin_events(sent_t, ones, 0, interval_us, n)
    ok = [1 if r.outcome is Outcome.DELIVERED else 0 for r in records]
    _, delivered = kernels.bin_events(sent_t, ok, 0, interval_us, n)
    got = [r.delivered_us for r in records if r.delivered_us is not None]
    recv, _ = kernels.bin_events(got, [0] * len(got), 0, interval_us, n)
    bits = payload_bytes * 8
    width_s = interval_us / 1_000_000
    out = []
    for k in range(n):
        loss = 1.0 - delivered[k] / sent[k] if sent[k] else 0.0
        out.append(IntervalStat(k * interval_us / 1_000_000, recv[k] * bits / width_s, sent[k], delivered[k], loss))
    return out


def compute_handoff_duration(
    intervals: list[IntervalStat], threshold_bps: float, window_start_s: float
) -> tuple[float, float | None]:
    """Length of the longest run of consecutive below-threshold intervals
    starting at or after ``window_start_s``, and where that run starts.

    Intervals with nothing sent carry no information and are skipped; they
    neither extend nor break a run. Returns ``(0.0, None)`` with no dip.
    """
    best_len, best_start = 0.0, None
    run_len, run_start = 0.0, None
    width = intervals[1].t_start_s - intervals[0].t_start_s if len(intervals) > 1 else 0.0
    for iv in intervals:
        if iv.t_start_s < window_start_s - 1e-9 or iv.sent == 0:
            continue
        if iv.throughput_bps < threshold_bps:
            if run_start is None:
                run_start, run_len = iv.t_start_s, 0.0
            run_len += width
            if run_len > best_len + 1e-12:
                best_len, best_start = run_len, run_start
        else:
            run_start, run_len = None, 0.0
    return round(best_len, 9), best_start


def totals(records: list[DatagramRecord]) -> Totals:
    counts = {o: 0 for o in Outcome}
    for r in records:
        counts[r.outcome] += 1
    return Totals(len(records), counts[Outcome.DELIVERED], counts[Outcome.DROPPED], counts[Outcome.IN_FLIGHT])


def lost_in_window(records: list[DatagramRecord], start_s: float, end_s: float) -> int:
    """Datagrams sent in ``[start_s, end_s)`` that were not delivered."""
    lo, hi = round(start_s * 1_000_000), round(end_s * 1_000_000)
    return sum(1 for r in records if lo <= r.sent_us < hi and r.outcome is Outcome.DROPPED)


def mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0
