"""Exception hierarchy shared by all seqkrig modules."""


class SeqKrigError(Exception):
    """Base class for errors raised by seqkrig."""


class UnsupportedKernelError(SeqKrigError, ValueError):
    """The requested operation is not defined for this kernel family."""


class NumericalError(SeqKrigError, ArithmeticError):
    """A factorization or variance computation broke down."""


class EmptyCandidatesError(SeqKrigError, ValueError):
    """Every candidate was already part of the current design."""


class ClusteringError(SeqKrigError):
    """Cluster walk could not form ``b`` clusters even at the minimum alpha.

    The partial partition is kept on ``partition`` so callers can fall back.
    """

    def __init__(self, message, partition):
        super().__init__(message)
        self.partition = partition


class CampaignError(SeqKrigError):
    """A campaign stopped early; ``result`` holds the partial trace."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
