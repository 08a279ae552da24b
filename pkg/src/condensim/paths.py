"""Shared sample containers for both simulation engines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PathSample:
    """A single path recorded at macroscopic sample times.

    ``points[i]`` is the simplex point at ``times[i]``; ``meta`` keeps
    the engine tag, seed and config hash for reproducibility audits.
    """

    times: np.ndarray
    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)
