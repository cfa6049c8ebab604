"""Josephson circuit simulation and energy accounting for AQFP logic."""

from .cells import CellParams, TestbenchPlan, build_testbench, logic_readout, reference_params
from .energy import compute_works, e_diss_cut, fit_wper, frequency_sweep, stage_decomposition, work_integral
from .netlist import Netlist, parse_netlist, serialize_netlist, validate
from .solver import PHI0, SimConfig, TransientTrace, run_transient

__all__ = [
    "CellParams",
    "TestbenchPlan",
    "build_testbench",
    "logic_readout",
    "reference_params",
    "compute_works",
    "e_diss_cut",
    "fit_wper",
    "frequency_sweep",
    "stage_decomposition",
    "work_integral",
    "Netlist",
    "parse_netlist",
    "serialize_netlist",
    "validate",
    "PHI0",
    "SimConfig",
    "TransientTrace",
    "run_transient",
]
