"""Exception hierarchy.

Every error raised by the pipeline derives from :class:`TransitEtaError`.
The CLI maps :class:`DataError` to exit code 3 and
:class:`TrainingDivergence` to exit code 4.
"""


class TransitEtaError(Exception):
    """Base class for all package errors."""


class DataError(TransitEtaError):
    """Input data is malformed, inconsistent or insufficient."""


class TrainingDivergence(TransitEtaError):
    """Model training produced non-finite values."""


# geo
class DegenerateSegment(DataError):
    pass


# ingest
class HeaderMismatch(DataError):
    pass


class EndpointUnreachable(DataError):
    pass


class MalformedResponse(DataError):
    pass


# timetable
class DanglingStopRef(DataError):
    def __init__(self, stop_id, where=""):
        self.stop_id = stop_id
        super().__init__(f"unknown stop_id {stop_id!r}{where}")


class DanglingScheduleKey(DataError):
    pass


class NoScheduledRun(DataError):
    pass


class UnknownLine(DataError):
    def __init__(self, line):
        self.line = line
        super().__init__(f"line {line!r} is not in any line group")


# match
class Ambiguous(DataError):
    pass


class TooFewPings(DataError):
    pass


class OffRoute(DataError):
    pass


# models
class TooFewSamples(DataError):
    pass


class NonFiniteLoss(TrainingDivergence):
    pass


class DegenerateCluster(TrainingDivergence):
    pass


class NoDataAnywhere(DataError):
    pass


class BeyondRoute(DataError):
    pass


class LayoutMismatch(DataError):
    pass


# hybrid
class MissingModel(DataError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"no trained model registered for {key!r}")


# evaluation
class EmptyInput(DataError):
    pass


class MismatchedTestSets(DataError):
    pass
