class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class AuditFailure(RuntimeError):
    """A privacy or goodness-of-fit audit did not pass."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
