"""Exception types shared across the package.

Every error carries a module-qualified ``code`` so the CLI can emit
machine-readable error JSON.
"""


class ModeSwitchError(Exception):
    code = "modeswitch.error"


class ConfigurationError(ModeSwitchError):
    """Malformed catalog descriptor, config file, or schema violation."""

    code = "model.configuration"


class NumericalBlowupError(ModeSwitchError):
    code = "grid.numerical_blowup"


class DegenerateLatticeError(ModeSwitchError):
    code = "grid.degenerate_lattice"


class IllPosedRegressionError(ModeSwitchError):
    code = "grid.ill_posed_regression"


class StepSizeError(ModeSwitchError):
    """Time step too coarse for a contraction-based fixed-point solve."""

    code = "bsde.step_size"


class ConvergenceError(ModeSwitchError):
    code = "bsde.convergence"


class ShapeMismatchError(ModeSwitchError):
    code = "modeswitch.shape_mismatch"


class InfeasibleBarriersError(ModeSwitchError):
    code = "rbsde.infeasible_barriers"


class BudgetExceededError(ModeSwitchError):
    code = "oracle.budget_exceeded"


class PreconditionError(ModeSwitchError):
    code = "modeswitch.precondition"
