"""Typed failures shared across modules."""


class ResolutionExhausted(ValueError):
    """A dyadic level lies beyond what the grid can resolve."""

    def __init__(self, message: str, max_level: int):
        super().__init__(f"resolution exhausted: {message} (max admissible level {max_level})")
        self.max_level = max_level


class InfeasibleMomentSystem(ValueError):
    """Moment conditions could not be met at the requested order."""

    def __init__(self, message: str, achieved_order: int):
        super().__init__(f"{message} (achieved order {achieved_order})")
        self.achieved_order = achieved_order


class BudgetViolation(RuntimeError):
    """A stability budget was exceeded; names the step and the quantity."""

    def __init__(self, step: int, quantity: str, value: float, bound: float):
        super().__init__(f"step {step}: {quantity} = {value:.6g} exceeds bound {bound:.6g}")
        self.step, self.quantity, self.value, self.bound = step, quantity, value, bound


class IterationAbort(RuntimeError):
    """Base class for typed aborts raised by the KAM driver."""

    kind = "abort"

    def __init__(self, step: int, quantity: str, value: float, bound: float):
        super().__init__(f"{self.kind} at step {step}: {quantity} = {value:.6g}, bound {bound:.6g}")
        self.step, self.quantity, self.value, self.bound = step, quantity, value, bound


class ScheduleAbort(IterationAbort):
    kind = "schedule abort"


class GeometryAbort(IterationAbort):
    kind = "geometry abort"


class InversionAbort(IterationAbort):
    kind = "inversion abort"
