"""Exception hierarchy shared across the package."""


class SpeckleLabError(Exception):
    """Base class for every error raised by speckle_lab."""


class ValidationError(SpeckleLabError, ValueError):
    """Bad user input: parameters, grid specs, missing files."""


class ImageFormatError(SpeckleLabError):
    """Base for image decoding failures."""


class UnreadableFileError(ImageFormatError):
    pass


class MalformedHeaderError(ImageFormatError):
    pass


class UnsupportedFormatError(ImageFormatError):
    pass


class UnsupportedBitDepthError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


class DegenerateClusteringError(SpeckleLabError):
    """Requested more clusters than there are distinct intensities."""


class UndefinedCorrelationError(SpeckleLabError, ArithmeticError):
    """NCC denominator is zero (template or covered region is flat)."""


class NoValidMatchError(SpeckleLabError):
    pass


class InsufficientClassSupportError(SpeckleLabError):
    pass


class InsufficientImagesError(SpeckleLabError):
    def __init__(self, deficits):
        self.deficits = list(deficits)
        super().__init__("; ".join(self.deficits))
