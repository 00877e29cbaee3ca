"""Exception types raised across the package."""


class IsoCornersError(Exception):
    """Base class for all package errors."""


class ImageIOError(IsoCornersError, OSError):
    """File missing or unreadable."""


class FormatError(IsoCornersError, ValueError):
    """File readable but not in a supported or well-formed format."""


class EmptyCurve(IsoCornersError, ValueError):
    pass


class PointNotOnCurve(IsoCornersError, ValueError):
    pass


class NoCorrespondent(IsoCornersError):
    """The level set at the shifted intensity is empty or fills the block."""


class DegenerateSupport(IsoCornersError, ValueError):
    pass


class ImageTooSmall(IsoCornersError, ValueError):
    pass


class NoStableCurve(IsoCornersError):
    pass


class PatchOutOfBounds(IsoCornersError, ValueError):
    pass


class NoAdmissiblePairing(IsoCornersError):
    pass


class InconsistentInput(IsoCornersError, ValueError):
    pass


class TrajectoryOutOfBounds(IsoCornersError, ValueError):
    pass


class DimensionMismatch(IsoCornersError, ValueError):
    pass
