"""Nash-Moser style KAM iteration for integrable almost complex structures.

Grid fields, Hölder-Zygmund norms, smoothing operators, the dbar homotopy,
structure pushforwards and the iteration driver, with a command-line
harness that regenerates every acceptance table.
"""
from .errors import (BudgetViolation, GeometryAbort, InfeasibleMomentSystem, InversionAbort, IterationAbort,
                     ResolutionExhausted, ScheduleAbort)
from .grid import GridField

__version__ = "0.1.0"

__all__ = ["GridField", "ResolutionExhausted", "InfeasibleMomentSystem", "BudgetViolation", "IterationAbort",
           "ScheduleAbort", "GeometryAbort", "InversionAbort", "__version__"]
