"""Exception hierarchy shared by every covct module."""


class CovctError(Exception):
    """Base class for all covct errors."""


class ShapeMismatch(CovctError, ValueError):
    pass


class EmptyTarget(CovctError, ValueError):
    pass


class InvalidBBox(CovctError, ValueError):
    pass


class NoLungFound(CovctError):
    """No contour survived the lung area filter."""


class CorruptModel(CovctError):
    pass


class UnknownColormap(CovctError, KeyError):
    pass


class EmptyInput(CovctError, ValueError):
    pass


class LengthMismatch(CovctError, ValueError):
    pass


class SingleClass(CovctError, ValueError):
    """ROC analysis needs at least one positive and one negative label."""


class UnsupportedImage(CovctError):
    """The file is readable but uses an encoding outside the supported subset."""
