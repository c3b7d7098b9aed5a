"""Exception hierarchy shared by every stage of the pipeline."""


class LogActiveError(Exception):
    """Base class for all package errors."""


class InputError(LogActiveError):
    """Bad user input: missing files, unparseable records, infeasible requests."""


class MalformedLine(InputError):
    def __init__(self, raw: str, reason: str = "header pattern did not match"):
        super().__init__(f"{reason}: {raw[:80]!r}")
        self.raw = raw
        self.reason = reason


class FormatError(InputError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class InfeasibleSplit(InputError):
    pass


class DimensionMismatch(LogActiveError):
    pass


class TooFewPoints(InputError):
    pass


class SingleCluster(LogActiveError):
    pass


class EmptyPool(LogActiveError):
    pass


class EmptyValidation(InputError):
    pass


class EmptyVocabulary(LogActiveError):
    pass


class SingleClassData(LogActiveError):
    pass


class LengthMismatch(LogActiveError):
    pass


class MissingClusterLabel(LogActiveError):
    pass


class MissingTruth(InputError):
    pass


class RemoteUnavailable(LogActiveError):
    """Remote endpoint failed after bounded retries."""


class UnparseableResponse(LogActiveError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw
