"""Exception and warning types shared across the package."""


class FormatError(ValueError):
    """A file exists but its contents are not in a supported format."""


class InvalidParam(ValueError):
    """A numeric parameter is outside its admissible range."""


class ShapeMismatch(ValueError):
    """Operands have incompatible extents or channel counts."""


class DegenerateInput(ValueError):
    """The input carries no usable signal for the requested computation."""


class DegenerateInputWarning(UserWarning):
    """A degenerate input was handled by a documented fallback value."""


class EmptyTask(ValueError):
    """A task with nonzero sampling weight has no training samples."""


class EmptyList(ValueError):
    """An aggregate was requested over zero samples."""
