"""Exception hierarchy shared across the toolkit.

``ValidationError`` covers bad inputs and broken invariants (CLI exit code 1);
everything else derived from ``StbfError`` is treated as a runtime failure
(exit code 2).
"""


class StbfError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(StbfError):
    """Invalid input data, configuration, or violated invariant."""


class FormatError(ValidationError):
    """Malformed header, manifest, or model file."""


class DivergenceError(StbfError):
    """Iterative optimization failed to make progress."""
