"""Exception types shared across the package."""


class LociError(Exception):
    """Base class for all package errors."""


class ShapeError(LociError, ValueError):
    """Operand shapes do not conform."""


class AxisError(LociError, ValueError):
    """Reduction or softmax axis out of range."""


class NumericError(LociError, FloatingPointError):
    """Non-finite values where finite ones are required."""


class RegistrationError(LociError):
    """Duplicate registration of a named op."""


class ContractError(LociError, ValueError):
    """A documented pre-condition was violated."""


class ConfigError(LociError, ValueError):
    """Invalid configuration value or unknown key."""


class LifecycleError(LociError, RuntimeError):
    """Object used before it was initialised."""


class FormatError(LociError, ValueError):
    """Malformed binary container."""
