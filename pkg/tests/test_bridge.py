import random

from hypothesis import given, settings
from hypothesis import strategies as st

from afx.dataplane import Datapath, EtherFrame, LearningBridge, Mode

A, B, C = (bytes([2, 0, 0, 0, 0, i]) for i in (1, 2, 3))


def test_unknown_destination_floods_other_ports():
    br = LearningBridge(lambda: [1, 2, 3])
    assert br.forward(A, B, 1, 0) == [2, 3]


def test_downstream_follows_latest_upstream_port():
    # generator on port 1, AP1 on port 2, AP2 on port 3
    br = LearningBridge(lambda: [1, 2, 3])
    br.forward(C, A, 1, 0)
    br.forward(A, C, 2, 1)
    assert br.forward(C, A, 1, 2) == [2]
    br.forward(A, C, 3, 3)  # station now reachable through AP2
    assert br.forward(C, A, 1, 4) == [3]


def test_destination_on_ingress_port_dropped():
    br = LearningBridge(lambda: [1, 2])
    br.forward(A, C, 1, 0)
    assert br.forward(B, A, 1, 1) == []


def test_entries_age_out_after_300_s():
    br = LearningBridge(lambda: [1, 2, 3])
    br.forward(A, C, 2, 0)
    assert br.forward(C, A, 1, 299_999_999) == [2]
    assert br.forward(C, A, 1, 300_000_000 + 299_999_999) == [2, 3]


def test_datapath_in_bridge_mode_uses_bridge():
    dp = Datapath(1, wired_ports=(1, 2, 3), mode=Mode.BRIDGE)
    assert dp.forward(EtherFrame(A, B, 64), 1) == [2, 3]
    assert dp.forward(EtherFrame(B, A, 64), 3) == [1]


class OracleBridge:
    def __init__(self, ports, aging_us):
        self.ports, self.aging, self.t = ports, aging_us, {}

    def forward(self, src, dst, port, now):
        self.t[src] = (port, now)
        hit = self.t.get(dst)
        if hit is not None and now - hit[1] >= self.aging:
            del self.t[dst]
            hit = None
        if hit is None:
            return [p for p in self.ports if p != port]
        return [] if hit[0] == port else [hit[0]]


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_bridge_matches_reference_oracle(seed):
    r = random.Random(seed)
    ports = [1, 2, 3, 4]
    macs = [bytes([2, 0, 0, 0, 0, i]) for i in range(6)]
    br, ref = LearningBridge(lambda: ports, aging_s=5), OracleBridge(ports, 5_000_000)
    now = 0
    for _ in range(200):
        now += r.randint(0, 400_000)
        src, dst, port = r.choice(macs), r.choice(macs), r.choice(ports)
        assert br.forward(src, dst, port, now) == ref.forward(src, dst, port, now)
