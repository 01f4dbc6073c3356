"""Exception types shared by all anlink modules."""


class AnlinkError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteError(AnlinkError):
    """Input contains NaN or Inf entries."""


class NoNullSpaceError(AnlinkError):
    """Matrix has full column rank, so there is no null space to exploit."""


class NegativeVarianceError(AnlinkError):
    pass


class DimensionMismatchError(AnlinkError):
    pass


class ZeroChannelError(AnlinkError):
    """Channel norm is below tolerance; the matched beamformer is undefined."""


class ShapeMismatchError(AnlinkError):
    pass


class EmptyLatentError(AnlinkError):
    pass


class EmptyDatasetError(AnlinkError):
    pass


class DivergedTrainingError(AnlinkError):
    """Training loss or parameters became NaN/Inf."""


class DegenerateMeanError(AnlinkError):
    """Image means are too close to zero to normalize the error by them."""


class MissingPathError(AnlinkError):
    pass


class MalformedIdxError(AnlinkError):
    """IDX file has a bad magic number or a truncated payload."""


class InconsistentDimsError(AnlinkError):
    pass


class MissingCheckpointError(AnlinkError):
    pass


class ConfigInvalidError(AnlinkError):
    pass


class VersionMismatchError(AnlinkError):
    """Checkpoint format version or shape header does not match this build."""


class IoFailureError(AnlinkError):
    pass
