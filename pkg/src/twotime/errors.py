"""Exception hierarchy.

Every error raised for a physically or numerically invalid request derives
from :class:`TwoTimeError`; the CLI maps these to exit code 3.
"""


class TwoTimeError(Exception):
    """Base class for simulation-domain errors."""


class LayoutError(TwoTimeError, ValueError):
    """Conflicting, unknown or mismatched subsystem layouts."""


class NotUnitaryError(TwoTimeError, ValueError):
    pass


class NotHermitianError(TwoTimeError, ValueError):
    pass


class InvalidObservableError(TwoTimeError, ValueError):
    pass


class ForbiddenTwoStateError(TwoTimeError, ValueError):
    """History and destiny vectors are orthogonal (or numerically so)."""

    def __init__(self, overlap: float, message: str | None = None):
        self.overlap = overlap
        if message is None:
            message = (
                f"forbidden two-state: normalized overlap |<des|his>| = {overlap:.3e} "
                "is below the orthogonality threshold"
            )
        super().__init__(message)


class BranchInconsistentError(ForbiddenTwoStateError):
    def __init__(self, overlap: float, branch: str):
        self.branch = branch
        super().__init__(
            overlap,
            f"branch inconsistent with history: final branch {branch!r} has "
            f"normalized overlap {overlap:.3e} with the history vector",
        )


class IncompatibleSelectionError(TwoTimeError, ValueError):
    """Pre- and post-selected states admit no intermediate outcome."""


class DegenerateDecompositionError(TwoTimeError, ValueError):
    pass


class GridTooSmallError(TwoTimeError, ValueError):
    pass


class QuantizationError(TwoTimeError, ValueError):
    pass


class EmptyPostSelectionError(TwoTimeError, ValueError):
    pass


class IncompleteBasisError(TwoTimeError, ValueError):
    pass
