"""The closed set of restoration tasks."""

from __future__ import annotations

import enum


class TaskKind(enum.Enum):
    DEWARP = "dewarp"
    DESHADOW = "deshadow"
    APPEARANCE = "appearance"
    DEBLUR = "deblur"
    BINARIZE = "binarize"

    @classmethod
    def parse(cls, token: str | "TaskKind") -> "TaskKind":
        """Accept a lowercase token (``"deblur"``) or an existing member."""
        if isinstance(token, cls):
            return token
        try:
            return cls(token)
        except ValueError:
            names = ", ".join(t.value for t in cls)
            raise ValueError(f"unknown task {token!r}; expected one of: {names}") from None

    def __str__(self) -> str:
        return self.value


# Canonical order; index i of a weight vector refers to ALL_TASKS[i].
ALL_TASKS: tuple[TaskKind, ...] = tuple(TaskKind)
