"""Exception types raised across the package."""


class SlimError(Exception):
    """Base class for every error raised by slim_nlu."""


class DimensionError(SlimError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(SlimError, ValueError):
    """A documented precondition was violated by the caller."""


class StateError(SlimError, RuntimeError):
    """An object was used in a state that does not allow the operation."""


class OutOfRangeError(SlimError, IndexError):
    """An index (token id, label id) falls outside its inventory."""


class FormatError(SlimError, ValueError):
    """A label string or file does not follow the expected format."""


class ValidationError(SlimError, ValueError):
    """A dataset record violates the schema or the intent assumptions."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ConfigError(SlimError, ValueError):
    """A configuration object or file is invalid."""


class MappingError(SlimError, ValueError):
    """A label has no entry in the label inventory."""


class InputError(SlimError, ValueError):
    """User-supplied input is empty or unusable."""


class DivergenceError(SlimError, RuntimeError):
    """Training produced a non-finite loss."""


class SearchError(SlimError, RuntimeError):
    """Every trial of a hyperparameter search failed."""
