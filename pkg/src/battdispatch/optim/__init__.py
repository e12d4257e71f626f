"""Linear and mixed-binary optimization: models, simplex, branch and bound, MPS."""
from .bnb import solve_milp
from .kernels import BACKEND
from .model import (INF, INFEASIBLE, ITERATION_LIMIT, NODE_LIMIT, OPTIMAL, UNBOUNDED, Basis,
                    LinearProgram, MixedIntegerProgram, ModelError, Solution, Tolerances)
from .mps import export_mps, import_solution, read_mps, write_solution
from .simplex import solve_lp

__all__ = [
    "BACKEND", "INF", "INFEASIBLE", "ITERATION_LIMIT", "NODE_LIMIT", "OPTIMAL", "UNBOUNDED",
    "Basis", "LinearProgram", "MixedIntegerProgram", "ModelError", "Solution", "Tolerances",
    "export_mps", "import_solution", "read_mps", "write_solution", "solve_lp", "solve_milp",
]
