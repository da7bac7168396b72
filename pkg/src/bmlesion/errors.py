"""Exception types shared across the package."""


class BMError(Exception):
    """Base class for package errors."""


class DimensionError(BMError, ValueError):
    """Shapes or grid sizes are incompatible."""


class DomainError(BMError, ValueError):
    """Input lies outside the operation's domain (e.g. ROI off the map, no GTs)."""


class DegenerateInputError(BMError, ValueError):
    """Nothing to compute over, e.g. a loss with zero trainable anchors."""


class ConfigError(BMError, ValueError):
    """Invalid or unknown configuration value."""


class FormatError(BMError, ValueError):
    """A binary file is malformed (bad magic, version or truncated payload)."""


class ParseError(BMError, ValueError):
    """A text record failed validation."""

    def __init__(self, path: str, line: int, field: str, message: str) -> None:
        self.path = path
        self.line = line
        self.field = field
        super().__init__(f"{path}:{line}: field {field!r}: {message}")
