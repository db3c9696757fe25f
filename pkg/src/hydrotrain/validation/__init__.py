"""Post-solve validation: relaxation tightness, forward simulation, method comparison,
and a dynamic-programming oracle for small instances."""
from .compare import ComparisonReport, SolveFailure, compare_methods, run_method
from .dp import DPError, DPGrid, DPResult, dp_oracle
from .simulate import (ExactModels, SimTrace, SimulationError, Thermostat, simulate_forward,
                       thermostat_cooling)
from .tightness import TightnessReport, check_tightness, relaxation_slacks

__all__ = ["ComparisonReport", "SolveFailure", "compare_methods", "run_method",
           "DPError", "DPGrid", "DPResult", "dp_oracle",
           "ExactModels", "SimTrace", "SimulationError", "Thermostat", "simulate_forward",
           "thermostat_cooling", "TightnessReport", "check_tightness", "relaxation_slacks"]
