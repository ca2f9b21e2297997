"""Core value types shared by the feature pipeline, the model and evaluation."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import RatingOutOfRangeError


class Scenario(str, enum.Enum):
    """Call scenario: which side(s) of the call are talking."""

    NEAR_END_SINGLE_TALK = "nst"
    FAR_END_SINGLE_TALK = "fst"
    DOUBLE_TALK = "dt"

    @property
    def near_active(self) -> bool:
        return self in (Scenario.NEAR_END_SINGLE_TALK, Scenario.DOUBLE_TALK)

    @property
    def far_active(self) -> bool:
        return self in (Scenario.FAR_END_SINGLE_TALK, Scenario.DOUBLE_TALK)


@dataclass(frozen=True)
class MosPair:
    """(echo MOS, other-degradation MOS), each on the 1-5 opinion scale."""

    echo_mos: float
    other_mos: float

    def __post_init__(self):
        for name, value in (("echo_mos", self.echo_mos), ("other_mos", self.other_mos)):
            if not (1.0 <= value <= 5.0):
                raise RatingOutOfRangeError(f"{name}={value!r} outside [1, 5]")
        object.__setattr__(self, "echo_mos", float(self.echo_mos))
        object.__setattr__(self, "other_mos", float(self.other_mos))

    def as_array(self) -> np.ndarray:
        return np.array([self.echo_mos, self.other_mos], dtype=np.float64)


@dataclass(frozen=True)
class FeatureBlock:
    """Stacked spectrograms in (near, far, enhanced) channel order, shape (3, frames, bins)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] != 3:
            raise ValueError(f"feature block must have shape (3, frames, bins), got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]
