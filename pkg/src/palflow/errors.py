"""Exception types shared across the package."""


class PalflowError(Exception):
    """Base class for all errors raised by palflow."""


class ContractError(PalflowError, ValueError):
    """Input violates a documented precondition (shapes, signs, domains)."""


class ParameterError(PalflowError, ValueError):
    """A tuning parameter is out of range (mu <= 0, bad schedule, ...)."""


class IntegrationError(PalflowError, RuntimeError):
    """The integrator could not continue (step underflow, multiplier fault)."""


class EstimationError(PalflowError, ValueError):
    """Not enough usable samples to fit a convergence rate."""


class ProblemFileError(PalflowError, ValueError):
    """A JSON problem definition is malformed or unsupported."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
