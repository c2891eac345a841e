"""Dataset container format and the synthetic motor-imagery generator.

The on-disk container ("EEGB v1") is little-endian and fully validated on
load: magic "EEGB", u32 version, u32 channels, u32 samples_per_trial,
u32 trial_count, f32 fs_hz, f32 cue_offset_s, two length-prefixed UTF-8
class names, a length-prefixed subject id, then per trial one u8 label
(1 or 2) followed by channels x samples little-endian f32 samples,
channel-major.  Length prefixes are u32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .epochs import EegEpoch
from .errors import ConfigError, DatasetFormatError, ParameterError

MAGIC = b"EEGB"
FORMAT_VERSION = 1
_MAX_STRING = 4096  # sanity cap for length-prefixed strings


@dataclass(frozen=True, eq=False)
class Dataset:
    """A subject's trials plus the metadata needed to window them."""

    subject_id: str
    fs_hz: float
    channels: int
    class_names: tuple[str, str]
    trials: tuple[EegEpoch, ...]
    cue_offset_s: float = 0.0

    def __post_init__(self):
        if not self.trials:
            raise ParameterError("dataset has no trials")
        labels = {t.label for t in self.trials}
        if not {1, 2} <= labels:
            missing = 1 if 1 not in labels else 2
            raise ParameterError(f"dataset has no trials of class {missing}")
        for i, t in enumerate(self.trials):
            if t.channels != self.channels:
                raise ParameterError(
                    f"trial {i} has {t.channels} channels, dataset says "
                    f"{self.channels}"
                )
            if t.fs_hz != self.fs_hz:
                raise ParameterError(
                    f"trial {i} rate {t.fs_hz} differs from dataset rate "
                    f"{self.fs_hz}"
                )
        if len(self.class_names) != 2:
            raise ParameterError("exactly two class names are required")
        if self.cue_offset_s < 0:
            raise ParameterError("cue offset must be >= 0")

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=np.int64)

    def class_count(self, label: int) -> int:
        return sum(1 for t in self.trials if t.label == label)


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the EEGB v1 container format."""
    samples = dataset.trials[0].samples
    for i, t in enumerate(dataset.trials):
        if t.samples != samples:
            raise ParameterError(
                f"trial {i} has {t.samples} samples, expected {samples}; "
                f"the container requires equal-length trials"
            )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(
            struct.pack(
                "<IIIIff",
                FORMAT_VERSION,
                dataset.channels,
                samples,
                dataset.n_trials,
                dataset.fs_hz,
                dataset.cue_offset_s,
            )
        )
        f.write(_pack_string(dataset.class_names[0]))
        f.write(_pack_string(dataset.class_names[1]))
        f.write(_pack_string(dataset.subject_id))
        for t in dataset.trials:
            f.write(struct.pack("<B", t.label))
            f.write(t.data.astype("<f4").tobytes(order="C"))


class _Reader:
    """Byte reader that tracks its offset for parse errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise DatasetFormatError(
                f"truncated file while reading {what}: expected {n} bytes at "
                f"offset {self.offset}, only {len(self.data) - self.offset} "
                f"remain",
                offset=self.offset,
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def string(self, what: str) -> str:
        at = self.offset
        n = self.u32(f"{what} length")
        if n > _MAX_STRING:
            raise DatasetFormatError(
                f"{what} length {n} exceeds the {_MAX_STRING}-byte cap",
                offset=at,
            )
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DatasetFormatError(
                f"{what} is not valid UTF-8: {exc}", offset=at + 4
            ) from exc


def load_dataset(path) -> Dataset:
    """Load and fully validate an EEGB v1 container.

    Raises :class:`DatasetFormatError` carrying the byte offset for bad
    magic, truncation, version/label/rate violations, non-finite samples,
    and trailing bytes.
    """
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise DatasetFormatError(
            f"bad magic {magic!r}, expected {MAGIC!r}", offset=0
        )
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported container version {version}", offset=4
        )
    channels = r.u32("channels")
    samples = r.u32("samples_per_trial")
    trial_count = r.u32("trial_count")
    at_fs = r.offset
    fs_hz = r.f32("fs_hz")
    at_cue = r.offset
    cue_offset_s = r.f32("cue_offset_s")
    if channels < 2:
        raise DatasetFormatError(
            f"channel count {channels} below the minimum of 2", offset=8
        )
    if samples < 2:
        raise DatasetFormatError(
            f"samples_per_trial {samples} below the minimum of 2", offset=12
        )
    if trial_count < 2:
        raise DatasetFormatError(
            f"trial count {trial_count} below the minimum of 2", offset=16
        )
    if not (np.isfinite(fs_hz) and fs_hz > 0):
        raise DatasetFormatError(f"invalid fs_hz {fs_hz}", offset=at_fs)
    if not (np.isfinite(cue_offset_s) and cue_offset_s >= 0):
        raise DatasetFormatError(
            f"invalid cue_offset_s {cue_offset_s}", offset=at_cue
        )
    class1 = r.string("class name 1")
    class2 = r.string("class name 2")
    subject = r.string("subject id")

    expected_total = r.offset + trial_count * (1 + channels * samples * 4)
    if len(blob) != expected_total:
        raise DatasetFormatError(
            f"file length {len(blob)} does not match the header: expected "
            f"{expected_total} bytes",
            offset=min(len(blob), expected_total),
        )

    trials = []
    for i in range(trial_count):
        at_label = r.offset
        label = r.u8(f"trial {i} label")
        if label not in (1, 2):
            raise DatasetFormatError(
                f"trial {i} label {label} out of range (must be 1 or 2)",
                offset=at_label,
            )
        at_data = r.offset
        raw = r.take(channels * samples * 4, f"trial {i} samples")
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(data)):
            bad = int(np.flatnonzero(~np.isfinite(data))[0])
            raise DatasetFormatError(
                f"trial {i} contains a non-finite sample at flat index {bad}",
                offset=at_data + bad * 4,
            )
        trials.append(
            EegEpoch(
                data=data.reshape(channels, samples),
                fs_hz=fs_hz,
                label=label,
            )
        )
    try:
        return Dataset(
            subject_id=subject,
            fs_hz=fs_hz,
            channels=channels,
            class_names=(class1, class2),
            trials=tuple(trials),
            cue_offset_s=cue_offset_s,
        )
    except ParameterError as exc:
        raise DatasetFormatError(str(exc), offset=len(blob)) from exc


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic two-class motor-imagery generator."""

    channels: int = 8
    trials_per_class: int = 50
    fs_hz: float = 100.0
    duration_s: float = 3.5
    erd_band_hz: tuple[float, float] = (8.0, 12.0)
    snr_db: float = 20.0
    seed: int = 0
    class_names: tuple[str, str] = ("class1", "class2")

    def validate(self) -> None:
        if self.channels < 2:
            raise ConfigError(f"need >= 2 channels, got {self.channels}")
        if self.trials_per_class < 1:
            raise ConfigError("need >= 1 trial per class")
        if not (self.fs_hz > 0 and np.isfinite(self.fs_hz)):
            raise ConfigError(f"invalid fs_hz {self.fs_hz}")
        if self.duration_s * self.fs_hz < 8:
            raise ConfigError("duration too short for meaningful trials")
        lo, hi = self.erd_band_hz
        if not (0 < lo < hi < self.fs_hz / 2):
            raise ConfigError(
                f"erd band {self.erd_band_hz} must lie inside (0, fs/2)"
            )
        if not np.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")


def _pink_noise(rng, n_channels, n_samples):
    """1/f-shaped background noise, unit RMS per channel."""
    white = rng.standard_normal((n_channels, n_samples))
    spec = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(n_samples)
    freqs[0] = freqs[1]  # keep DC finite
    spec /= np.sqrt(freqs)
    pink = np.fft.irfft(spec, n=n_samples, axis=1)
    rms = np.sqrt(np.mean(pink * pink, axis=1, keepdims=True))
    return pink / rms


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Deterministic two-class dataset with spatially distinct rhythms.

    Class 1 trials carry a band-limited oscillation mixed through a fixed
    spatial pattern, class 2 through a second non-parallel pattern, both
    over 1/f background noise scaled to the requested SNR.  CSP can
    recover the patterns, so end-to-end accuracy is meaningful rather
    than vacuous.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_t = int(round(cfg.duration_s * cfg.fs_hz))
    t = np.arange(n_t) / cfg.fs_hz

    p1 = rng.standard_normal(cfg.channels)
    p1 /= np.linalg.norm(p1)
    p2 = rng.standard_normal(cfg.channels)
    # keep the class patterns clearly non-parallel
    if abs(float(p1 @ p2)) / np.linalg.norm(p2) > 0.7:
        p2 -= (p1 @ p2) * p1
    p2 /= np.linalg.norm(p2)

    amplitude = 10.0 ** (cfg.snr_db / 20.0)
    trials = []
    for label, pattern in ((1, p1), (2, p2)):
        for _ in range(cfg.trials_per_class):
            noise = _pink_noise(rng, cfg.channels, n_t)
            f0 = rng.uniform(*cfg.erd_band_hz)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            osc = np.sqrt(2.0) * np.sin(2.0 * np.pi * f0 * t + phase)
            sig = np.outer(pattern, osc) * np.sqrt(cfg.channels)
            scale = amplitude * np.sqrt(
                float(np.sum(noise * noise)) / float(np.sum(sig * sig))
            )
            data = 10.0 * (noise + scale * sig)
            # store at container precision so save/load round-trips exactly
            data = data.astype("<f4").astype(np.float64)
            trials.append(EegEpoch(data=data, fs_hz=cfg.fs_hz, label=label))
    return Dataset(
        subject_id=f"synthetic-seed{cfg.seed}",
        fs_hz=cfg.fs_hz,
        channels=cfg.channels,
        class_names=cfg.class_names,
        trials=tuple(trials),
        cue_offset_s=0.0,
    )
