"""amslab: simulation-verified identification, sizing, and trade-off
labeling for analog circuit netlists."""

from .netlist import (
    Device,
    DeviceKind,
    Fixed,
    Netlist,
    Port,
    PortType,
    Tunable,
    emit_netlist,
    parse_netlist,
)

__all__ = [
    "Device",
    "DeviceKind",
    "Fixed",
    "Netlist",
    "Port",
    "PortType",
    "Tunable",
    "emit_netlist",
    "parse_netlist",
]

__version__ = "0.1.0"
