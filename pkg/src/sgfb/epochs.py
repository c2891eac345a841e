"""Single-trial EEG container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True, eq=False)
class EegEpoch:
    """One trial: a channels x samples matrix with sampling rate and label.

    ``data`` is stored as a read-only float64 array (microvolts); ``label``
    is the class id, 1 or 2.
    """

    data: np.ndarray
    fs_hz: float
    label: int

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ParameterError(f"epoch data must be 2-D, got {arr.ndim}-D")
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ParameterError(
                f"epoch needs >= 2 channels and >= 2 samples, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ParameterError("epoch data contains non-finite samples")
        if not (self.fs_hz > 0 and np.isfinite(self.fs_hz)):
            raise ParameterError(f"invalid sampling rate {self.fs_hz}")
        if self.label not in (1, 2):
            raise ParameterError(f"label must be 1 or 2, got {self.label}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "fs_hz", float(self.fs_hz))
        object.__setattr__(self, "label", int(self.label))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.samples / self.fs_hz

    def window(self, start_s: float, end_s: float, cue_offset_s: float = 0.0) -> "EegEpoch":
        """Slice out [cue + start, cue + end) as a new epoch."""
        if not start_s < end_s:
            raise ParameterError(f"window start {start_s} must precede end {end_s}")
        i0 = int(round((cue_offset_s + start_s) * self.fs_hz))
        i1 = int(round((cue_offset_s + end_s) * self.fs_hz))
        if i0 < 0 or i1 > self.samples or i1 - i0 < 2:
            raise ParameterError(
                f"window [{start_s}, {end_s}) s at cue {cue_offset_s} s maps to "
                f"samples [{i0}, {i1}) outside the trial of {self.samples} samples"
            )
        return EegEpoch(data=self.data[:, i0:i1], fs_hz=self.fs_hz, label=self.label)
