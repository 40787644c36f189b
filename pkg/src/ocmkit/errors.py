"""Exception types shared across the toolkit."""


class OcmkitError(Exception):
    """Base class for all toolkit errors."""


class InputError(OcmkitError):
    """Invalid argument, configuration, or file content."""


class NumericError(OcmkitError):
    """A numeric procedure failed: root finding, truncation, convergence."""
