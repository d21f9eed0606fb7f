"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class CalibrationError(ValidationError):
    """Raised when inelastic reward rates cannot be calibrated."""


class DomainError(ValidationError):
    """Raised when a continuous quantity lies outside its admissible range."""


class NumericError(ArithmeticError):
    """Raised when a model contains NaN/Inf or a quantity diverges."""


class CapacityError(MemoryError):
    """Raised when a model would exceed the configured memory cap."""

    def __init__(self, message, required_bytes=None, cap_bytes=None):
        super().__init__(message)
        self.required_bytes = required_bytes
        self.cap_bytes = cap_bytes
