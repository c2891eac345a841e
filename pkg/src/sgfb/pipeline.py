"""End-to-end per-fold pipeline: window, filter bank, CSP, dictionary,
sparse solve, residual classification.

Training artifacts (spatial filters, dictionary) are computed from the
training trials only; test trials never touch them.  ``TrainedFold``
exposes a fingerprint over those artifacts so fold hygiene is checkable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import csp as csp_mod
from . import sparse
from .dataio import Dataset
from .epochs import EegEpoch
from .errors import ConfigError, ParameterError
from .filterbank import DEFAULT_BAND_EDGES, DEFAULT_ORDER, FilterBank, split_subbands

CLASSIFIERS = ("sgfb", "src")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the per-fold pipeline needs besides the data."""

    band_edges: tuple[tuple[float, float], ...] = DEFAULT_BAND_EDGES
    filter_order: int = DEFAULT_ORDER
    window: tuple[float, float] = (1.0, 2.0)
    m_pairs: int = csp_mod.DEFAULT_M_PAIRS
    shrinkage: float = csp_mod.DEFAULT_SHRINKAGE
    lam: float = 0.3
    lam1: float = 0.1
    max_outer_iters: int = sparse.DEFAULT_MAX_OUTER_ITERS
    tol: float = sparse.DEFAULT_TOL
    classifier: str = "sgfb"

    def validate(self, dataset: Dataset | None = None) -> None:
        if not self.band_edges:
            raise ConfigError("band plan is empty")
        for lo, hi in self.band_edges:
            if not (0 < lo < hi):
                raise ConfigError(f"bad band edges ({lo}, {hi})")
        if self.filter_order < 1:
            raise ConfigError(f"filter order must be >= 1, got {self.filter_order}")
        if not self.window[0] < self.window[1]:
            raise ConfigError(f"window {self.window} must have start < end")
        if self.m_pairs < 1:
            raise ConfigError(f"m_pairs must be >= 1, got {self.m_pairs}")
        if not (0.0 <= self.shrinkage < 1.0):
            raise ConfigError(f"shrinkage must lie in [0, 1), got {self.shrinkage}")
        if self.lam < 0 or self.lam1 < 0:
            raise ConfigError("lambda and lambda1 must be >= 0")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(
                f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}"
            )
        if dataset is not None:
            nyquist = dataset.fs_hz / 2.0
            for lo, hi in self.band_edges:
                if hi >= nyquist:
                    raise ConfigError(
                        f"band edge {hi} Hz at or above Nyquist {nyquist} Hz"
                    )
            end = dataset.cue_offset_s + self.window[1]
            duration = dataset.trials[0].duration_s
            if end > duration + 1e-9:
                raise ConfigError(
                    f"window end {end} s exceeds trial duration {duration} s"
                )

    def effective_m_pairs(self, channels: int) -> int:
        # clamp so 2M never exceeds the channel count (small synthetic data)
        return max(1, min(self.m_pairs, channels // 2))

    def hyperparams(self) -> sparse.SgfbHyperparams:
        return sparse.SgfbHyperparams(
            lam=self.lam,
            lam1=self.lam1,
            max_outer_iters=self.max_outer_iters,
            tol=self.tol,
        )


@dataclass
class FoldFlags:
    """Degeneracy counters accumulated while a fold runs."""

    var_floor_hits: int = 0
    zero_dictionary_columns: int = 0
    classification_ties: int = 0

    def merge(self, other: "FoldFlags") -> None:
        self.var_floor_hits += other.var_floor_hits
        self.zero_dictionary_columns += other.zero_dictionary_columns
        self.classification_ties += other.classification_ties


@dataclass(frozen=True, eq=False)
class TrainedFold:
    """Immutable training artifacts of one fold."""

    bank: FilterBank
    model: csp_mod.CspModel
    dictionary: sparse.BandDictionary
    stacked_dictionary: np.ndarray  # bands stacked and re-capped, for src
    config: PipelineConfig
    flags: FoldFlags

    def fingerprint(self) -> str:
        """Hash of the spatial filters and dictionary blocks."""
        h = hashlib.sha256()
        for W in self.model.per_band:
            h.update(np.ascontiguousarray(W).tobytes())
        for block in self.dictionary.blocks:
            h.update(np.ascontiguousarray(block).tobytes())
        h.update(self.dictionary.column_class.tobytes())
        h.update(self.dictionary.column_trial.tobytes())
        return h.hexdigest()


def _windowed_bands(trial: EegEpoch, dataset: Dataset, cfg: PipelineConfig,
                    bank: FilterBank) -> list[EegEpoch]:
    w = trial.window(cfg.window[0], cfg.window[1], dataset.cue_offset_s)
    return split_subbands(w, bank)


def _stack_and_cap(dictionary: sparse.BandDictionary) -> np.ndarray:
    stacked = np.vstack(dictionary.blocks)
    norms = np.linalg.norm(stacked, axis=0)
    scale = np.where(norms > 1.0, 1.0 / np.maximum(norms, 1e-300), 1.0)
    return stacked * scale


def train_fold(dataset: Dataset, train_idx, cfg: PipelineConfig) -> TrainedFold:
    """Fit the filter bank, CSP model, and dictionary on training trials."""
    cfg.validate(dataset)
    train_idx = [int(i) for i in train_idx]
    if not train_idx:
        raise ParameterError("empty training index set")
    bank = FilterBank.design(dataset.fs_hz, cfg.band_edges, cfg.filter_order)
    m_pairs = cfg.effective_m_pairs(dataset.channels)

    band_trials: list[list[EegEpoch]] = [[] for _ in range(bank.band_count)]
    for i in train_idx:
        for b, ep in enumerate(_windowed_bands(dataset.trials[i], dataset, cfg, bank)):
            band_trials[b].append(ep)
    model = csp_mod.fit_csp_model(band_trials, m_pairs, cfg.shrinkage)

    flags = FoldFlags()
    features = []
    for k, i in enumerate(train_idx):
        bands = [band_trials[b][k] for b in range(bank.band_count)]
        fv = csp_mod.extract_features(model, bands)
        flags.var_floor_hits += fv.n_floored
        features.append(
            csp_mod.FeatureVector(
                per_band=fv.per_band, label=dataset.trials[i].label,
                n_floored=fv.n_floored,
            )
        )
    dictionary = sparse.normalize_columns(sparse.build_dictionary(features))
    flags.zero_dictionary_columns += len(dictionary.zero_columns)
    return TrainedFold(
        bank=bank,
        model=model,
        dictionary=dictionary,
        stacked_dictionary=_stack_and_cap(dictionary),
        config=cfg,
        flags=flags,
    )


@dataclass(frozen=True)
class TrialOutcome:
    predicted: int
    actual: int
    tie: bool
    n_floored: int
    solver_iterations: int


def classify_trial(fold: TrainedFold, dataset: Dataset, trial_index: int) -> TrialOutcome:
    """Window, filter, featurize, solve, and classify one test trial."""
    cfg = fold.config
    trial = dataset.trials[trial_index]
    bands = _windowed_bands(trial, dataset, cfg, fold.bank)
    fv = csp_mod.extract_features(fold.model, bands)
    y_bands = [sparse.cap_unit_norm(z) for z in fv.per_band]

    if cfg.classifier == "sgfb":
        code = sparse.sgfb_solve(y_bands, fold.dictionary, cfg.hyperparams())
        decision = sparse.classify(y_bands, fold.dictionary, code)
        iters = code.iterations
    else:  # stacked single-task baseline
        y = sparse.cap_unit_norm(np.concatenate([np.asarray(z) for z in fv.per_band]))
        coeffs = sparse.src_solve(y, fold.stacked_dictionary, cfg.lam)
        decision = sparse.src_classify(
            y, fold.stacked_dictionary, coeffs, fold.dictionary.column_class
        )
        iters = 1
    return TrialOutcome(
        predicted=decision.label,
        actual=trial.label,
        tie=decision.tie,
        n_floored=fv.n_floored,
        solver_iterations=iters,
    )


def dictionary_coherence(dictionary: sparse.BandDictionary) -> dict[int, float]:
    """Cross-class mutual coherence per band (dictionary diagnostic)."""
    out = {}
    c1 = dictionary.column_class == 1
    for b, block in enumerate(dictionary.blocks):
        out[b] = sparse.mutual_coherence(block[:, c1], block[:, ~c1])
    return out
