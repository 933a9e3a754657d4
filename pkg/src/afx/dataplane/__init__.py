"""Simulated switch/AP data plane: flow table, wireless ports, station FSM, bridge."""

from .bridge import LearningBridge
from .datapath import (
    TRANSITIONS,
    Agent,
    Datapath,
    EtherFrame,
    MgmtKind,
    Mode,
    PhysCaps,
    StationRecord,
    StationState,
    WirelessLogicalPort,
    WirelessPhysicalPort,
)
from .flowtable import FlowEntry, FlowModError, FlowModErrorKind, FlowTable

__all__ = [
    "TRANSITIONS",
    "Agent",
    "Datapath",
    "EtherFrame",
    "FlowEntry",
    "FlowModError",
    "FlowModErrorKind",
    "FlowTable",
    "LearningBridge",
    "MgmtKind",
    "Mode",
    "PhysCaps",
    "StationRecord",
    "StationState",
    "WirelessLogicalPort",
    "WirelessPhysicalPort",
]
