"""Exception hierarchy shared by every module."""


class VflReconError(Exception):
    """Base class for all errors raised by this package."""


class RankDeficient(VflReconError):
    pass


class DimensionMismatch(VflReconError, ValueError):
    pass


class DimensionCap(VflReconError):
    """The exhaustive search would exceed the configured dimension cap."""


class ParseError(VflReconError, ValueError):
    pass


class MissingLabel(VflReconError, KeyError):
    pass


class EmptyDataset(VflReconError, ValueError):
    pass


class IndexOutOfRange(VflReconError, IndexError):
    pass


class OverlappingSplit(VflReconError, ValueError):
    pass


class InvalidColumns(VflReconError, ValueError):
    pass


class InvalidArchitecture(VflReconError, ValueError):
    pass


class NonFiniteLoss(VflReconError, FloatingPointError):
    pass


class NotOrthogonal(VflReconError, ValueError):
    pass


class DegenerateTranscript(VflReconError, ValueError):
    pass


class NoBinaryFeatures(VflReconError, ValueError):
    pass


class InvalidSubset(VflReconError, ValueError):
    pass


class TooLarge(VflReconError, ValueError):
    pass


class ConfigError(VflReconError, ValueError):
    pass
