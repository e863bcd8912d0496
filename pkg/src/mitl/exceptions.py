"""Exception hierarchy shared by all mitl modules."""


class MitlError(Exception):
    """Base class for every error raised by this package."""


# linear algebra
class NonSymmetric(MitlError, ValueError):
    pass


class NonFinite(MitlError, ValueError):
    pass


class AllZeroSpectrum(MitlError, ValueError):
    pass


class NonPositiveDefinite(MitlError, ValueError):
    pass


class DimensionMismatch(MitlError, ValueError):
    pass


class NoConvergence(MitlError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


# data io
class FormatError(MitlError, ValueError):
    pass


class InvalidBand(MitlError, ValueError):
    pass


class OutOfBounds(MitlError, IndexError):
    pass


# alignment
class DegenerateReference(MitlError, ValueError):
    pass


class EmptyOnlineReference(MitlError, ValueError):
    pass


# spatial filtering
class EmptyClass(MitlError, ValueError):
    pass


class RankDeficient(MitlError, ValueError):
    pass


class InvalidParam(MitlError, ValueError):
    pass


class ZeroVariance(MitlError, ValueError):
    pass


# feature selection
class TooFewSamples(MitlError, ValueError):
    pass


class InvalidM(MitlError, ValueError):
    pass


# classifiers
class SingularSystem(MitlError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NoLabeledData(MitlError, ValueError):
    pass


# harness
class ConfigInfeasible(MitlError, ValueError):
    pass


class LengthMismatch(MitlError, ValueError):
    pass


class TooShort(MitlError, ValueError):
    pass


class MissingBaseline(MitlError, KeyError):
    pass
