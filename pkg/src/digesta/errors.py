"""Exception hierarchy shared by the model, integrator and CLI."""


class DigestaError(Exception):
    """Base class for all package errors."""


class DegenerateBolus(DigestaError):
    """Bolus state has no accessible volume (M - F_insol <= 0 or W_tot < W_sol)."""


class ViscosityBlowup(DigestaError):
    """Available-water concentration fell below the viscosity guard."""


class NegativeMass(DigestaError):
    """A fixed-step update drove a mass pool below the clamp threshold."""


class UnknownParameter(DigestaError, KeyError):
    """A dotted parameter path does not name an existing field."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown parameter"


class ValidationError(DigestaError, ValueError):
    """A configuration value violates a documented invariant."""


class ParseError(DigestaError, ValueError):
    """Configuration text could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class OutputError(DigestaError, OSError):
    """An output file could not be written."""
