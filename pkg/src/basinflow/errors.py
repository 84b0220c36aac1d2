"""Exception hierarchy shared across the package."""


class BasinflowError(Exception):
    """Base class for all package errors."""


class ParseError(BasinflowError):
    """Malformed text input (grid header, CSV row, manifest line)."""


class ShapeError(BasinflowError):
    """Grid shape or georeferencing mismatch."""


class EmptyInputError(BasinflowError):
    """Operation received no usable cells or samples."""


class CycleError(BasinflowError):
    """Flow-direction grid contains a cycle."""

    def __init__(self, cell, msg=None):
        self.cell = cell
        super().__init__(msg or f"cycle detected through cell {cell}")


class BoundsError(BasinflowError):
    """Cell index outside the grid."""


class MissingDataError(BasinflowError):
    """A required file or time step is absent."""


class DataRangeError(BasinflowError):
    """Value outside its admissible range (negative forcing, bad fraction)."""


class StepError(BasinflowError):
    """Time step incompatible with the requested operation."""


class NoViableGaugeError(BasinflowError):
    """Outlet selection eliminated every candidate."""


class AmbiguousHintError(BasinflowError):
    """A user gauge hint matched two or more candidates."""


class DeciderFormatError(BasinflowError):
    """External decider reply violated the one-line JSON contract."""


class UndefinedMetricError(BasinflowError):
    """Metric undefined for the given series (zero variance, zero mean)."""


class IncompleteContextError(BasinflowError):
    """Report context missing a required artifact."""


class RequestParseError(BasinflowError):
    """Free-form request could not be resolved into a simulation request."""


class DirectiveError(BasinflowError):
    """Feedback directive referenced an unknown parameter or bad value."""
