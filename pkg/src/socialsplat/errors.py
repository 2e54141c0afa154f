"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class DegenerateError(ValueError):
    """Geometry or covariance too degenerate to evaluate."""


class ValidationError(ValueError):
    """Input data failed validation (meshes, cameras, manifests)."""


class ResamplingError(ValueError):
    """Two sequences cannot be brought to a common frame rate."""


class FormatError(ValueError):
    """A binary or JSON file does not match its declared layout.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, path=None, offset=None):
        super().__init__(message)
        self.path = path
        self.offset = offset

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.offset is not None:
            where.append(f"byte {self.offset}")
        return f"{': '.join(where)}: {msg}" if where else msg


class ConfigError(ValueError):
    """Bad or missing configuration for a training stage or command."""


class NumericalError(ArithmeticError):
    """A loss or parameter became NaN or infinite."""


class PrerequisiteError(RuntimeError):
    """A required earlier artifact (e.g. a previous stage's checkpoint) is missing."""
