"""Exception types shared across the package.

Two failure families matter to callers (and to the CLI exit codes):
bad inputs and numerical breakdowns. Everything else is a bug.
"""


class ValidationError(ValueError):
    """Invalid input: bad config fields, shape mismatches, unsupported models.

    ``field`` optionally carries a dotted path into the offending config
    document, e.g. ``"model.Q[0]"``.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericalError(RuntimeError):
    """A solver or probe could not produce a trustworthy result.

    Raised e.g. when a bracketing search hits its cap without a sign change,
    or when a diagnostic is handed a degenerate (zero-variance) sample.
    """
