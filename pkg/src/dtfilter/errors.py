"""Exception types shared across the package."""


class FilterError(Exception):
    """Base class for errors raised by this package."""


class InvalidDimensionError(FilterError, ValueError):
    """A map was requested with a dimension that is not a positive integer."""


class InvalidParameterError(FilterError, ValueError):
    """A numeric parameter lies outside its allowed range."""


class ShapeMismatchError(FilterError, ValueError):
    """Two objects that must agree in shape do not."""


class LabelError(FilterError, ValueError):
    """A class label lies outside [0, num_classes)."""


class DomainViolationError(FilterError, ValueError):
    """An input sits too close to its domain boundary for the requested operation."""


class TapeError(FilterError, ValueError):
    """A recorded forward tape is missing, incomplete, or inconsistent."""


class FormatError(FilterError, ValueError):
    """A file does not conform to its declared on-disk format."""
