"""
Error types for the sensor layout simulator.
Every failure the library raises on purpose derives from SensorLayoutError and
carries the process exit code the command line uses for it.
"""


class SensorLayoutError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DomainError(SensorLayoutError, ValueError):
    """Input outside its valid domain (points, parameters, indices, shapes)."""

    exit_code = 3


class ConvergenceError(SensorLayoutError, ArithmeticError):
    """A numerical routine failed where the math guarantees success."""

    exit_code = 1


class ImageFormatError(SensorLayoutError, IOError):
    """Image file could not be decoded or uses an unsupported format."""

    exit_code = 2


class DatasetError(SensorLayoutError, IOError):
    """Dataset container is malformed or inconsistent."""

    exit_code = 2


class ToleranceError(SensorLayoutError):
    """A numerical check exceeded its tolerance."""

    exit_code = 4

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
