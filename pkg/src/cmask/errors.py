"""Exception types shared across the package.

The CLI maps these onto stable exit codes (2 and 3 respectively).
"""


class ParameterError(ValueError):
    """Invalid argument, shape mismatch or inconsistent inputs."""


class FormatError(ValueError):
    """Malformed or unsupported file contents."""
