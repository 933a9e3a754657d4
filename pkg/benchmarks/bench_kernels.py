"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs in both backends; the script checks the
outputs agree before reporting timings.
"""

from __future__ import annotations

import argparse
import random
import timeit

from afx import wire
from afx.kernels import _purepy

try:
    from afx.kernels import _fastpath
except ImportError:
    _fastpath = None


def workloads(rng: random.Random):
    stream = b"".join(
        wire.encode(wire.Experimenter(i, wire.DropStation(100, bytes(rng.getrandbits(8) for _ in range(6)))))
        for i in range(5000)
    )
    n_entries = 64
    in_ports = [-1 if rng.random() < 0.7 else rng.randrange(1, 5) for _ in range(n_entries)]
    dsts = [bytes([2, 0, 0, 0, 1, k]) for k in range(n_entries)]
    probes = [(rng.randrange(1, 5), bytes([2, 0, 0, 0, 1, rng.randrange(80)])) for _ in range(2000)]
    times = sorted(rng.randrange(0, 30_000_000) for _ in range(23_000))
    weights = [rng.randrange(2) for _ in times]

    return {
        "scan_frames (5000 msgs)": lambda m: m.scan_frames(stream),
        "first_match (2000 lookups, 64 entries)": lambda m: [m.first_match(in_ports, dsts, p, d) for p, d in probes],
        "bin_events (23k events, 60 bins)": lambda m: m.bin_events(times, weights, 0, 500_000, 60),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _fastpath is None:
        print("compiled extension not built; only the pure-Python backend is available")
    print(f"{'kernel':42s} {'python (ms)':>12s} {'cython (ms)':>12s} {'speedup':>8s}")
    for name, fn in workloads(random.Random(7)).items():
        py = min(timeit.repeat(lambda: fn(_purepy), number=1, repeat=args.repeat)) * 1e3
        if _fastpath is None:
            print(f"{name:42s} {py:12.2f} {'-':>12s} {'-':>8s}")
            continue
        if fn(_purepy) != fn(_fastpath):
            raise SystemExit(f"backends disagree on {name}")
        cy = min(timeit.repeat(lambda: fn(_fastpath), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:42s} {py:12.2f} {cy:12.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
