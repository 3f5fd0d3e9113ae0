"""Task-specific prior-feature prompts for unified document image restoration.

One small network restores documents for five tasks (dewarping, deshadowing,
appearance enhancement, deblurring and binarisation). The task is selected by
a three-plane prompt of classically computed image priors that is stacked on
top of the RGB input.
"""

from . import core_io, imgproc, metrics, prompt, synth
from .errors import (
    DegenerateInput,
    DegenerateInputWarning,
    EmptyList,
    EmptyTask,
    FormatError,
    InvalidParam,
    ShapeMismatch,
)
from .tasks import ALL_TASKS, TaskKind

__version__ = "0.1.0"
