import importlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import msggen
from afx import kernels, wire
from afx.kernels import _purepy

try:
    _fast = importlib.import_module("afx.kernels._fastpath")
except ImportError:  # extension not built in this environment
    _fast = None

needs_fast = pytest.mark.skipif(_fast is None, reason="compiled kernels not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


@needs_fast
@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=0, max_value=200))
def test_scan_frames_backends_agree(seed, cut):
    r = random.Random(seed)
    stream = b"".join(wire.encode(msggen.any_message(r)) for _ in range(r.randint(0, 8)))
    stream = stream[: max(0, len(stream) - cut)]
    if r.random() < 0.3 and stream:
        pos = r.randrange(len(stream))
        stream = stream[:pos] + bytes([r.getrandbits(8)]) + stream[pos + 1 :]
    assert _fast.scan_frames(stream) == _purepy.scan_frames(stream)


@needs_fast
@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.sampled_from([-1, 1, 2, 3]), st.sampled_from([b"", b"\x01" * 6, b"\x02" * 6])), max_size=30),
    st.sampled_from([1, 2, 3, 4]),
    st.sampled_from([b"\x01" * 6, b"\x02" * 6, b"\x03" * 6]),
)
def test_first_match_backends_agree(entries, in_port, dst):
    ports = [e[0] for e in entries]
    dsts = [e[1] for e in entries]
    assert _fast.first_match(ports, dsts, in_port, dst) == _purepy.first_match(ports, dsts, in_port, dst)


@needs_fast
@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(min_value=-2_000_000, max_value=40_000_000), max_size=200),
    st.integers(min_value=1, max_value=1_000_000),
    st.integers(min_value=0, max_value=80),
)
def test_bin_events_backends_agree(times, width, n):
    weights = [t % 7 for t in times]
    assert _fast.bin_events(times, weights, 0, width, n) == _purepy.bin_events(times, weights, 0, width, n)


def test_bin_events_ignores_out_of_range():
    counts, sums = _purepy.bin_events([-1, 0, 9, 10, 25, 30], [1, 2, 3, 4, 5, 6], 0, 10, 3)
    assert counts == [2, 1, 1]
    assert sums == [5, 4, 5]


def test_scan_frames_reports_bad_length():
    ends, consumed, status = _purepy.scan_frames(bytes([4, 0, 0, 12, 0, 0, 0, 0]))
    assert (ends, consumed, status) == ([], 0, _purepy.SCAN_BAD_LENGTH)
