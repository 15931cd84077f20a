"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`AlprobeError` so the
CLI can map failures onto its exit-code contract in one place.
"""


class AlprobeError(Exception):
    """Base class for all library errors."""


class BehindCamera(AlprobeError):
    """Point projects behind (or onto) the camera plane."""


class InvalidResolution(AlprobeError):
    """Mesh or map resolution parameters out of range."""


class DegenerateTriangle(AlprobeError):
    """Mesh contains triangles below the minimum-area threshold."""


class EmptyMask(AlprobeError):
    """An operation requiring mask support received an all-zero mask."""


class DimensionMismatch(AlprobeError):
    """Two images/buffers that must agree in shape do not."""


class ObjectNotVisible(AlprobeError):
    """The posed object rasterizes to an empty mask."""


class TooFewViews(AlprobeError):
    """Multi-view reconstruction needs at least three captures."""


class NonFiniteLoss(AlprobeError):
    """Optimization produced a NaN/Inf loss value."""


class DegenerateReference(AlprobeError):
    """Scale-invariant comparison against an all-zero image."""


class MalformedHeader(AlprobeError):
    """Image file header could not be parsed."""


class TruncatedPayload(AlprobeError):
    """Image file ends before the expected pixel payload."""


class UnsupportedBitDepth(AlprobeError):
    """Mask PNG is not 8-bit grayscale."""


class ConfigError(AlprobeError):
    """Scene/fit configuration failed validation.

    ``field`` names the offending entry so the CLI message can point at it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
