"""Butterworth band-pass filter bank.

Designs the per-band IIR filters (analog Butterworth prototype, band
transform, bilinear discretization with frequency pre-warping, realized
as cascaded second-order sections) and applies them zero-phase to split
each epoch into per-band epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .epochs import EegEpoch
from .errors import ConfigError, FilterDesignError, ParameterError, SignalLengthError

DEFAULT_BAND_EDGES: tuple[tuple[float, float], ...] = tuple(
    (float(lo), float(lo + 4)) for lo in range(4, 40, 4)
)
DEFAULT_ORDER = 5
STABILITY_MARGIN = 1e-6


@dataclass(frozen=True)
class BandSpec:
    """One pass band: edges in Hz and the analog prototype order."""

    low_hz: float
    high_hz: float
    order: int = DEFAULT_ORDER

    def validate(self, fs_hz: float) -> None:
        if self.order < 1:
            raise ParameterError(f"filter order must be >= 1, got {self.order}")
        if not (0.0 < self.low_hz < self.high_hz):
            raise FilterDesignError(
                f"band edges must satisfy 0 < low < high, got "
                f"({self.low_hz}, {self.high_hz}) Hz"
            )
        if self.high_hz >= fs_hz / 2.0:
            raise FilterDesignError(
                f"band edge {self.high_hz} Hz is at or above Nyquist "
                f"({fs_hz / 2.0} Hz)"
            )


@dataclass(frozen=True, eq=False)
class IirFilter:
    """Cascade of second-order sections, scipy sos layout (n, 6)."""

    sections: np.ndarray

    def __post_init__(self):
        arr = np.array(self.sections, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 6:
            raise ParameterError(f"sos array must have shape (n, 6), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "sections", arr)

    @property
    def order(self) -> int:
        return 2 * self.sections.shape[0]

    def pole_magnitudes(self) -> np.ndarray:
        mags = []
        for sec in self.sections:
            mags.extend(np.abs(np.roots(sec[3:6])))
        return np.asarray(mags)


def design_bandpass(spec: BandSpec, fs_hz: float) -> IirFilter:
    """Design one Butterworth band-pass filter for the given rate.

    The returned single-pass magnitude is -3 dB at both band edges; every
    section is checked to be strictly stable.
    """
    spec.validate(fs_hz)
    sos = sp_signal.butter(
        spec.order,
        [spec.low_hz, spec.high_hz],
        btype="bandpass",
        fs=fs_hz,
        output="sos",
    )
    filt = IirFilter(sections=sos)
    worst = float(np.max(filt.pole_magnitudes()))
    if worst >= 1.0 - STABILITY_MARGIN:
        raise FilterDesignError(
            f"designed band ({spec.low_hz}-{spec.high_hz} Hz at {fs_hz} Hz) is "
            f"too close to instability: max pole magnitude {worst:.8f}"
        )
    return filt


def frequency_response(filt: IirFilter, freqs_hz, fs_hz: float) -> np.ndarray:
    """Complex response H(e^{j w}) evaluated straight from the coefficients."""
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    zinv = np.exp(-2j * np.pi * f / fs_hz)
    H = np.ones_like(zinv, dtype=np.complex128)
    for b0, b1, b2, a0, a1, a2 in filt.sections:
        H *= (b0 + b1 * zinv + b2 * zinv**2) / (a0 + a1 * zinv + a2 * zinv**2)
    return H


def _padlen(filt: IirFilter) -> int:
    return 3 * filt.order


def apply_zero_phase(filt: IirFilter, x) -> np.ndarray:
    """Forward-backward filtering with reflective edge padding.

    Output has the same length as the input and zero net phase shift;
    the effective magnitude response is the square of the single-pass
    design.  The operator is symmetrized over time reversal (both sweep
    orders averaged) so filtering has no preferred time direction even
    at the window edges.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError(f"expected a 1-D signal, got shape {x.shape}")
    pad = _padlen(filt)
    if x.shape[0] <= pad:
        raise SignalLengthError(
            f"signal of length {x.shape[0]} is too short for zero-phase "
            f"filtering; need more than {pad} samples"
        )
    return _filtfilt_symmetric(filt, x.copy(), axis=0, pad=pad)


def _filtfilt_symmetric(filt, data, axis, pad):
    # sosfiltfilt requires writable buffers; our arrays are stored read-only
    sos = filt.sections.copy()
    fwd = sp_signal.sosfiltfilt(sos, data, axis=axis, padtype="even", padlen=pad)
    flipped = np.flip(data, axis=axis).copy()
    bwd = sp_signal.sosfiltfilt(sos, flipped, axis=axis, padtype="even", padlen=pad)
    return 0.5 * (fwd + np.flip(bwd, axis=axis))


def _apply_zero_phase_rows(filt: IirFilter, data: np.ndarray) -> np.ndarray:
    pad = _padlen(filt)
    if data.shape[1] <= pad:
        raise SignalLengthError(
            f"epoch of {data.shape[1]} samples is too short for zero-phase "
            f"filtering; need more than {pad} samples"
        )
    return _filtfilt_symmetric(filt, data.copy(), axis=1, pad=pad)


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Ordered band-pass bank; band index is the group index downstream."""

    bands: tuple[BandSpec, ...]
    fs_hz: float
    filters: tuple[IirFilter, ...]

    @classmethod
    def design(
        cls,
        fs_hz: float,
        band_edges=DEFAULT_BAND_EDGES,
        order: int = DEFAULT_ORDER,
    ) -> "FilterBank":
        if not band_edges:
            raise ConfigError("band plan is empty")
        bands = tuple(BandSpec(lo, hi, order) for lo, hi in band_edges)
        filters = tuple(design_bandpass(b, fs_hz) for b in bands)
        return cls(bands=bands, fs_hz=float(fs_hz), filters=filters)

    @property
    def band_count(self) -> int:
        return len(self.bands)


def split_subbands(epoch: EegEpoch, bank: FilterBank) -> list[EegEpoch]:
    """Filter one epoch through every band; returns epochs in band order."""
    if epoch.fs_hz != bank.fs_hz:
        raise ConfigError(
            f"epoch rate {epoch.fs_hz} Hz does not match bank rate {bank.fs_hz} Hz"
        )
    out = []
    for filt in bank.filters:
        filtered = _apply_zero_phase_rows(filt, epoch.data)
        out.append(EegEpoch(data=filtered, fs_hz=epoch.fs_hz, label=epoch.label))
    return out
