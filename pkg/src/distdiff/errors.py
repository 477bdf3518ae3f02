"""Exception hierarchy shared by every distdiff module."""


class DistDiffError(Exception):
    """Base class for all distdiff errors."""


class CorruptModelError(DistDiffError):
    """Non-finite or otherwise unusable model data."""


class DegenerateMetricError(DistDiffError):
    """A metric sample is singular or not positive definite."""


class InvalidRequestError(DistDiffError, ValueError):
    """Caller asked for something the inputs cannot satisfy."""


class GeodesicInstabilityError(DistDiffError):
    """Speed drift exceeded the allowed bound; retry with a smaller step."""


class InconclusiveError(DistDiffError):
    """A search ran out of range before its predicate failed."""


class InsufficientDataError(DistDiffError):
    """Not enough samples to compute the requested quantity."""


class IncompatibleDatasetError(DistDiffError):
    """Datasets do not share a compatible F-sample set."""


class SourceOutsideMError(DistDiffError, ValueError):
    """A hidden source point does not lie in the unknown region M."""


class DatasetVersionError(DistDiffError):
    """Dataset file was written by an unsupported format version."""


class ChecksumError(DistDiffError):
    """Dataset file is truncated or corrupted."""


class RequiresInstrumentedError(DistDiffError):
    """Operation needs ground truth but received a blind dataset."""


class DegenerateChartError(DistDiffError):
    """Reference tuple gives a (numerically) singular chart."""


class UnderdeterminedError(DistDiffError):
    """Too few equations for the number of unknowns."""


class RecoveryFailedError(DistDiffError):
    """Nonlinear metric recovery did not converge to an SPD matrix."""


class NotProjectivelyRelatedError(DistDiffError):
    """Gauge residual exceeds tolerance after fitting the 1-form."""


class CFLViolationError(DistDiffError):
    """Time step too large for the explicit wave scheme."""


class NoArrivalError(DistDiffError):
    """A receiver trace never crossed the picking threshold."""


class IncompleteRecordError(DistDiffError):
    """Arrival record is missing picks for some receivers."""


class SeparationViolatedError(DistDiffError):
    """Arm length too short for the counterexample construction."""


class CounterexampleBrokenError(DistDiffError):
    """The counterexample construction failed one of its checks."""

    def __init__(self, verdict: str, report=None):
        super().__init__(verdict)
        self.verdict = verdict
        self.report = report


class EmptySigmaWarning(UserWarning):
    """A sigma set has fewer than two members."""


class NearCutLocusWarning(UserWarning):
    """Raw distance gradient is far from unit norm."""
