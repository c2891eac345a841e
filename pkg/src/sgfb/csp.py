"""Common spatial pattern training and log-variance features.

Per band: class covariances are averaged trace-normalized per-trial
covariances; spatial filters come from whitening the composite covariance
and eigendecomposing the whitened class-1 covariance, keeping the
eigenvectors of the largest and smallest eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import linalg
from .epochs import EegEpoch
from .errors import (
    DimensionError,
    EmptyClassError,
    ParameterError,
    RankDeficiencyError,
)

DEFAULT_M_PAIRS = 16
DEFAULT_SHRINKAGE = 1e-4
VAR_FLOOR = 1e-12


def normalized_covariance(X) -> np.ndarray:
    """Trace-normalized sample covariance X X^T / tr(X X^T)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a channels x samples matrix, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("epoch data contains non-finite samples")
    C = X @ X.T
    tr = float(np.trace(C))
    if tr <= 0.0:
        raise ParameterError("zero-trace epoch: all samples are zero")
    C /= tr
    return 0.5 * (C + C.T)


def class_covariance(trials: Sequence[EegEpoch], label: int) -> np.ndarray:
    """Mean of per-trial normalized covariances for one class.

    Each trial has its channel means removed before the covariance so the
    estimate is insensitive to DC offsets.
    """
    members = [t for t in trials if t.label == label]
    if not members:
        raise EmptyClassError(f"no trials with label {label}")
    n_ch = members[0].channels
    acc = np.zeros((n_ch, n_ch))
    for t in members:
        if t.channels != n_ch:
            raise DimensionError(
                f"trial channel count {t.channels} differs from {n_ch}"
            )
        centered = t.data - t.data.mean(axis=1, keepdims=True)
        acc += normalized_covariance(centered)
    return acc / len(members)


def _shrink(sigma: np.ndarray, gamma: float) -> np.ndarray:
    n = sigma.shape[0]
    return (1.0 - gamma) * sigma + gamma * (np.trace(sigma) / n) * np.eye(n)


def fit_csp(sigma1, sigma2, m_pairs: int, shrinkage: float = DEFAULT_SHRINKAGE) -> np.ndarray:
    """Spatial filters maximizing the between-class variance ratio.

    Solves sigma1 w = lambda (sigma1 + sigma2) w by whitening the composite
    covariance and eigendecomposing the whitened class-1 covariance.

    Returns
    -------
    (channels, 2 * m_pairs) ndarray
        Columns ordered: m_pairs filters of the largest generalized
        eigenvalues, then m_pairs of the smallest, each scaled so that
        w^T (sigma1 + sigma2) w = 1.
    """
    s1 = np.asarray(sigma1, dtype=np.float64)
    s2 = np.asarray(sigma2, dtype=np.float64)
    if s1.shape != s2.shape or s1.ndim != 2 or s1.shape[0] != s1.shape[1]:
        raise DimensionError(
            f"covariance shapes disagree: {s1.shape} vs {s2.shape}"
        )
    n = s1.shape[0]
    if m_pairs < 1:
        raise ParameterError(f"m_pairs must be >= 1, got {m_pairs}")
    if 2 * m_pairs > n:
        raise ParameterError(
            f"2 * m_pairs = {2 * m_pairs} exceeds channel count {n}"
        )
    if not (0.0 <= shrinkage < 1.0):
        raise ParameterError(f"shrinkage must lie in [0, 1), got {shrinkage}")

    s1 = _shrink(s1, shrinkage)
    s2 = _shrink(s2, shrinkage)
    composite = s1 + s2
    try:
        P = linalg.whiten(composite)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            f"composite covariance is rank deficient even after shrinkage "
            f"gamma={shrinkage}: {exc}",
            eigenvalue=exc.eigenvalue,
        ) from exc
    T = P @ s1 @ P.T
    res = linalg.sym_eig(0.5 * (T + T.T))
    W_full = P.T @ res.eigenvectors
    return np.hstack([W_full[:, :m_pairs], W_full[:, n - m_pairs:]])


@dataclass(frozen=True, eq=False)
class CspModel:
    """Per-band spatial filter matrices, in filter-bank band order."""

    per_band: tuple[np.ndarray, ...]
    m_pairs: int

    @property
    def band_count(self) -> int:
        return len(self.per_band)

    @property
    def channels(self) -> int:
        return self.per_band[0].shape[0]


def fit_csp_model(
    band_trials: Sequence[Sequence[EegEpoch]],
    m_pairs: int = DEFAULT_M_PAIRS,
    shrinkage: float = DEFAULT_SHRINKAGE,
) -> CspModel:
    """Train one spatial-filter matrix per band.

    ``band_trials[b]`` holds the training trials already filtered to band b.
    """
    if not band_trials:
        raise ParameterError("no bands supplied")
    filters = []
    for trials in band_trials:
        sigma1 = class_covariance(trials, 1)
        sigma2 = class_covariance(trials, 2)
        filters.append(fit_csp(sigma1, sigma2, m_pairs, shrinkage))
    return CspModel(per_band=tuple(filters), m_pairs=m_pairs)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Per-band log-variance features of one trial."""

    per_band: tuple[np.ndarray, ...]
    label: Optional[int]
    n_floored: int = 0

    def flattened(self) -> np.ndarray:
        return np.concatenate(self.per_band)


def extract_features(model: CspModel, band_epochs: Sequence[EegEpoch]) -> FeatureVector:
    """Log-variance of each spatially filtered band signal.

    Variance is the biased (1/N) variance after mean removal; projections
    with variance below 1e-12 are floored there before the log and counted
    in ``n_floored``.
    """
    if len(band_epochs) != model.band_count:
        raise DimensionError(
            f"got {len(band_epochs)} band epochs for a {model.band_count}-band model"
        )
    feats = []
    floored = 0
    label = band_epochs[0].label if band_epochs else None
    for W, ep in zip(model.per_band, band_epochs):
        if ep.channels != W.shape[0]:
            raise DimensionError(
                f"epoch has {ep.channels} channels, model expects {W.shape[0]}"
            )
        proj = W.T @ ep.data
        proj = proj - proj.mean(axis=1, keepdims=True)
        var = np.mean(proj * proj, axis=1)
        floored += int(np.sum(var < VAR_FLOOR))
        feats.append(np.log(np.maximum(var, VAR_FLOOR)))
    return FeatureVector(per_band=tuple(feats), label=label, n_floored=floored)
