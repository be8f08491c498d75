"""Exception types shared across the package."""


class TextRenderError(Exception):
    """Base class for all package errors."""


class ShapeError(TextRenderError, ValueError):
    """Operands have incompatible or invalid shapes."""


class DomainError(TextRenderError, ValueError):
    """An argument is outside the operation's domain."""


class ConfigError(TextRenderError, ValueError):
    """Invalid or inconsistent configuration."""


class TrainingError(TextRenderError, RuntimeError):
    """Training diverged or hit a non-finite value."""


class CodecError(TextRenderError, OSError):
    """Malformed or unsupported image file."""
