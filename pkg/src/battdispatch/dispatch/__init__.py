"""Network-constrained economic dispatch with battery storage."""
from .build import BatteryIndex, DispatchModel, build_dispatch
from .formulation import (KINDS, BatteryFormulation, FormulationError, IdealBattery, TriangleGrid,
                          make_formulation, sample_triangle_grid, triangle_partition)
from .network import (Battery, CaseError, Generator, Line, NetworkCase, Node, load_case, read_demand_csv,
                      save_case, write_demand_csv)
from .solve import (BatterySchedule, DispatchSchedule, VerificationError, read_battery_schedule,
                    schedule_from_vector, simultaneous_operation, solve_dispatch, verify_schedule,
                    write_schedule)

__all__ = [
    "KINDS", "Battery", "BatteryFormulation", "BatteryIndex", "BatterySchedule", "CaseError",
    "DispatchModel", "DispatchSchedule", "FormulationError", "Generator", "IdealBattery", "Line",
    "NetworkCase", "Node", "TriangleGrid", "VerificationError", "build_dispatch", "load_case",
    "make_formulation", "read_battery_schedule", "read_demand_csv", "sample_triangle_grid", "save_case",
    "schedule_from_vector", "simultaneous_operation", "solve_dispatch", "triangle_partition",
    "verify_schedule", "write_demand_csv", "write_schedule",
]
