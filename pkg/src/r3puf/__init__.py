"""Simulation and evaluation toolkit for the memristive R3PUF cell."""
from .cell import (
    CellConfig,
    CellState,
    DriveProfile,
    Status,
    divider_vout,
    extract,
    readout,
    reconfigure,
    run_cycle,
)
from .device import DeviceParams, DeviceState, EnduranceExceeded, Target, program, resistance
from .metrics import ResponseMatrix, median_split_baseline, reliability, uniformity, uniqueness
from .population import ChipSpec, ParamDist, VariationSpec, build_chip
from .campaign import CampaignConfig, load_config, run_campaign

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "CellConfig", "CellState", "ChipSpec", "DeviceParams", "DeviceState",
    "DriveProfile", "EnduranceExceeded", "ParamDist", "ResponseMatrix", "Status", "Target",
    "VariationSpec", "build_chip", "divider_vout", "extract", "load_config", "median_split_baseline",
    "program", "readout", "reconfigure", "reliability", "resistance", "run_campaign", "run_cycle",
    "uniformity", "uniqueness",
]
