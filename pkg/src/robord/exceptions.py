"""Exception hierarchy.

Validation problems subclass ``ValueError`` so the estimators behave like
the rest of the scikit-learn ecosystem; numerical failures raised mid-run
subclass ``RuntimeError``.
"""


class RobordError(Exception):
    """Base class for all errors raised by this package."""


class SpecInvalid(RobordError, ValueError):
    """A noise or synthetic-data specification violates its invariants."""


class ConfigInvalid(RobordError, ValueError):
    """A training or estimation configuration violates its invariants."""


class KInvalid(RobordError, ValueError):
    """Number of classes is not an integer >= 2."""


class LabelOutOfRange(RobordError, ValueError):
    """A label falls outside 1..K."""


class DimensionMismatch(RobordError, ValueError):
    """Array dimensions are inconsistent with the model or each other."""


class ShapeMismatch(RobordError, ValueError):
    """Parameter and gradient/accumulator shapes do not line up."""


class CacheMismatch(RobordError, ValueError):
    """A forward cache does not belong to the network passed to backward."""


class CorrectionMissing(RobordError, ValueError):
    """A corrected-loss operation was requested without an inverse matrix."""


class InverseMissing(RobordError, ValueError):
    """An operation needs the matrix inverse but it was never computed."""


class SingularMatrix(RobordError, RuntimeError):
    """A noise matrix is numerically non-invertible."""


class SingularEstimate(SingularMatrix):
    """An estimated noise matrix is numerically non-invertible."""


class NonFiniteLoss(RobordError, RuntimeError):
    """Training loss became NaN or infinite; the run was aborted."""


class EmptyClassSupport(RobordError, RuntimeError):
    """No usable anchor sample exists for some class during estimation."""


class ParseError(RobordError, ValueError):
    """A CSV or matrix file could not be parsed."""


class EmptyDataset(RobordError, ValueError):
    """A dataset required to be non-empty is empty."""


class TooFewSamples(RobordError, ValueError):
    """Not enough samples for the requested split or fold count."""


class EmptyInput(RobordError, ValueError):
    """An aggregation operation received an empty collection."""
