"""Exception hierarchy shared by all stages."""


class StereoError(Exception):
    """Base class for every error raised by branchstereo."""


class DomainError(StereoError, ValueError):
    """An argument lies outside the domain of the operation."""


class ParameterError(StereoError, ValueError):
    """A tuning parameter violates its invariant."""


class DimensionError(StereoError, ValueError):
    """Array shapes are empty, too small, or mismatched."""


class NoIntersectionError(StereoError, ValueError):
    """Left and right rays do not meet in front of the rig (disparity <= 0)."""


class InconsistentPairError(StereoError, ValueError):
    """A left/right correspondence violates the epipolar constraint."""


class NoDataError(StereoError, ValueError):
    """No valid samples remain to compute a result from."""


class EmptyMaskError(StereoError, ValueError):
    """A polygon covers no pixel of the image."""


class ParseError(StereoError):
    """Base class for file decoding failures."""


class MissingFileError(ParseError, FileNotFoundError):
    pass


class MalformedHeaderError(ParseError, ValueError):
    pass


class UnsupportedBitDepthError(ParseError, ValueError):
    pass


class TruncatedDataError(ParseError, ValueError):
    pass


class PipelineError(StereoError):
    """Wraps a failure inside :func:`branchstereo.fusion.run_pipeline` with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
