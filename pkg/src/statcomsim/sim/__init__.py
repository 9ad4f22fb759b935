"""System integration, scenario execution and transient metrics."""
from .metrics import (EventWindow, MetricsError, SettlingResult, StepMetrics, compute_overshoot,
                      compute_settling_time, dip_magnitude, event_windows, peak_deviation,
                      step_metrics)
from .run import (ControllerRun, SimulationError, compare_controllers, initial_state,
                  phasor_operating_point, run_scenario)
from .solver import LOG_COLUMNS, SolverConfig, SystemState, TimeSeriesLog, rk4_step

__all__ = [
    "EventWindow", "MetricsError", "SettlingResult", "StepMetrics", "compute_overshoot",
    "compute_settling_time", "dip_magnitude", "event_windows", "peak_deviation", "step_metrics",
    "ControllerRun", "SimulationError", "compare_controllers", "initial_state",
    "phasor_operating_point", "run_scenario", "LOG_COLUMNS", "SolverConfig", "SystemState",
    "TimeSeriesLog", "rk4_step",
]
