"""Exception hierarchy for qcnet."""


class QCNetError(Exception):
    """Base class for every error raised by this package."""


class AmbiguousTarget(QCNetError):
    """Two neighbors sit within tolerance of one translated point."""


class NoDirections(QCNetError):
    pass


class ModeMismatch(QCNetError):
    """State variant does not match the requested circulation mode."""


class StopBeforeStart(QCNetError):
    pass


class DegenerateEdge(QCNetError):
    """Edge endpoints coincide."""


class UnreachableBranch(QCNetError):
    """A branch rule names an edge that does not leave its vertex."""


class DuplicateAssignment(QCNetError):
    pass


class UnknownCell(QCNetError):
    pass


class InvalidConfig(QCNetError):
    pass


class InvalidSite(InvalidConfig):
    pass


class EmptyTrace(QCNetError):
    pass


class DocumentSyntaxError(QCNetError):
    """Malformed input document. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationFailed(QCNetError):
    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


class HashMismatch(QCNetError):
    pass


class NoSnapshots(QCNetError):
    pass
