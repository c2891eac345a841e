"""Cross-validation, grid search, and training-fraction experiments.

Folds are stratified and derived deterministically from the config seed;
model fitting sees training trials only.  Fold, grid-point, and repeat
work units are independent; test-trial classification can run on a
thread pool with results gathered by index, so output never depends on
completion order.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dataio import Dataset
from .errors import FoldError, ParameterError, SamplingError
from .pipeline import FoldFlags, PipelineConfig, TrainedFold, classify_trial, train_fold
from .report import FoldResult, FractionRow, GridResult, Metrics, RunResults

DEFAULT_LAMBDA_GRID = tuple(round(0.1 * k, 10) for k in range(1, 10))
DEFAULT_LAMBDA1_GRID = tuple(round(0.1 * k, 10) for k in range(1, 5))
DEFAULT_FRACTIONS = (0.3, 0.5, 0.7, 1.0)


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol: folds, grids, fractions, seed."""

    folds: int = 10
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    lambda1_grid: tuple[float, ...] = DEFAULT_LAMBDA1_GRID
    train_fraction: float = 1.0
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seed: int = 0
    repeats: int = 10
    threads: int = 1

    def validate(self) -> None:
        if self.folds < 2:
            raise FoldError(f"need >= 2 folds, got {self.folds}")
        if not self.lambda_grid or not self.lambda1_grid:
            raise ParameterError("hyperparameter grids must be non-empty")
        if not (0.0 < self.train_fraction <= 1.0):
            raise ParameterError(
                f"train_fraction must lie in (0, 1], got {self.train_fraction}"
            )
        for f in self.fractions:
            if not (0.0 < f <= 1.0):
                raise ParameterError(f"fraction {f} must lie in (0, 1]")
        if self.repeats < 1:
            raise ParameterError(f"repeats must be >= 1, got {self.repeats}")
        if self.threads < 0:
            raise ParameterError(f"threads must be >= 0, got {self.threads}")


def compute_metrics(tp: int, tn: int, fp: int, fn: int) -> Metrics:
    """Confusion counts to Metrics; class 1 is the positive class."""
    m = Metrics(tp=tp, tn=tn, fp=fp, fn=fn)
    if m.total == 0:
        raise ParameterError("empty evaluation: all confusion counts are zero")
    return m


def stratified_folds(labels, n_folds: int, seed: int):
    """Deterministic stratified k-fold assignment.

    Within each class the (seeded) shuffled trials are dealt round-robin
    across folds, so per-fold class proportions differ by at most one
    trial.  Returns a list of (train_idx, test_idx) pairs.
    """
    labels = np.asarray(labels)
    if n_folds < 2:
        raise FoldError(f"need >= 2 folds, got {n_folds}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    buckets: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in (1, 2):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_folds:
            raise FoldError(
                f"class {cls} has {idx.size} trials, fewer than {n_folds} folds"
            )
        idx = idx[rng.permutation(idx.size)]
        for k, i in enumerate(idx):
            buckets[k % n_folds].append(int(i))
    folds = []
    all_idx = set(range(labels.size))
    for k in range(n_folds):
        test = sorted(buckets[k])
        train = sorted(all_idx.difference(test))
        folds.append((train, test))
    return folds


def _confusion(outcomes) -> tuple[int, int, int, int]:
    tp = sum(1 for o in outcomes if o.actual == 1 and o.predicted == 1)
    fn = sum(1 for o in outcomes if o.actual == 1 and o.predicted == 2)
    tn = sum(1 for o in outcomes if o.actual == 2 and o.predicted == 2)
    fp = sum(1 for o in outcomes if o.actual == 2 and o.predicted == 1)
    return tp, tn, fp, fn


def _classify_fold(fold: TrainedFold, dataset: Dataset, test_idx, threads: int):
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads > 1 and len(test_idx) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(
                pool.map(lambda i: classify_trial(fold, dataset, i), test_idx)
            )
    else:
        outcomes = [classify_trial(fold, dataset, i) for i in test_idx]
    return outcomes


def _evaluate_split(dataset, train_idx, test_idx, pcfg, threads):
    fold = train_fold(dataset, train_idx, pcfg)
    outcomes = _classify_fold(fold, dataset, test_idx, threads)
    tp, tn, fp, fn = _confusion(outcomes)
    metrics = compute_metrics(tp, tn, fp, fn)
    flags = FoldFlags(
        var_floor_hits=fold.flags.var_floor_hits
        + sum(o.n_floored for o in outcomes),
        zero_dictionary_columns=fold.flags.zero_dictionary_columns,
        classification_ties=sum(1 for o in outcomes if o.tie),
    )
    return metrics, flags, fold


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _summarize(fold_metrics) -> dict:
    acc_m, acc_s = _mean_std([m.acc for m in fold_metrics])
    sen_m, sen_s = _mean_std([m.sen for m in fold_metrics])
    spe_m, spe_s = _mean_std([m.spe for m in fold_metrics])
    return {
        "acc_mean": acc_m, "acc_std": acc_s,
        "sen_mean": sen_m, "sen_std": sen_s,
        "spe_mean": spe_m, "spe_std": spe_s,
    }


@dataclass(frozen=True)
class CvOutcome:
    """Per-fold metrics plus the aggregate view of one k-fold run."""

    fold_metrics: tuple[Metrics, ...]
    summary: dict
    flags: FoldFlags
    fingerprints: tuple[str, ...]
    coherence: dict[int, float]
    stage_seconds: dict[str, float]


def kfold_cv(
    dataset: Dataset,
    pcfg: PipelineConfig,
    ecfg: EvalConfig,
    folds=None,
) -> CvOutcome:
    """Stratified k-fold cross-validation of the full pipeline.

    ``folds`` may carry a precomputed (train_idx, test_idx) list; by
    default the stratified split is derived from the config seed.
    """
    ecfg.validate()
    pcfg.validate(dataset)
    if folds is None:
        folds = stratified_folds(dataset.labels, ecfg.folds, ecfg.seed)
    metrics_list = []
    fingerprints = []
    total_flags = FoldFlags()
    coherence: dict[int, float] = {}
    t_train = 0.0
    t_classify = 0.0
    for train_idx, test_idx in folds:
        t0 = time.perf_counter()
        fold = train_fold(dataset, train_idx, pcfg)
        t1 = time.perf_counter()
        outcomes = _classify_fold(fold, dataset, test_idx, ecfg.threads)
        t2 = time.perf_counter()
        t_train += t1 - t0
        t_classify += t2 - t1
        tp, tn, fp, fn = _confusion(outcomes)
        metrics_list.append(compute_metrics(tp, tn, fp, fn))
        fingerprints.append(fold.fingerprint())
        total_flags.merge(
            FoldFlags(
                var_floor_hits=fold.flags.var_floor_hits
                + sum(o.n_floored for o in outcomes),
                zero_dictionary_columns=fold.flags.zero_dictionary_columns,
                classification_ties=sum(1 for o in outcomes if o.tie),
            )
        )
        if not coherence:
            from .pipeline import dictionary_coherence

            coherence = dictionary_coherence(fold.dictionary)
    return CvOutcome(
        fold_metrics=tuple(metrics_list),
        summary=_summarize(metrics_list),
        flags=total_flags,
        fingerprints=tuple(fingerprints),
        coherence=coherence,
        stage_seconds={"train": t_train, "classify": t_classify},
    )


def _select_best(surface, lambda_grid, lambda1_grid):
    """Argmax of the accuracy surface; ties go to larger lambda, then
    larger lambda1 (the sparser model)."""
    best = None
    for i, lam in enumerate(lambda_grid):
        for j, lam1 in enumerate(lambda1_grid):
            cell = (surface[i][j], lam, lam1)
            if best is None or cell >= best:
                best = cell
    return best[1], best[2]


@dataclass(frozen=True)
class GridOutcome:
    grid: GridResult
    fold_metrics: tuple[Metrics, ...]
    summary: dict
    flags: FoldFlags
    stage_seconds: dict[str, float]


def grid_search(dataset: Dataset, pcfg: PipelineConfig, ecfg: EvalConfig) -> GridOutcome:
    """Nested search: inner k-fold per outer fold over the full grid.

    The spatial filters and dictionary do not depend on the weights, so
    each inner fold is fitted once and every grid point only re-solves.
    The outer fold is then scored with its selected pair; the reported
    surface is the mean inner accuracy across outer folds.
    """
    ecfg.validate()
    pcfg.validate(dataset)
    outer = stratified_folds(dataset.labels, ecfg.folds, ecfg.seed)
    n_l, n_l1 = len(ecfg.lambda_grid), len(ecfg.lambda1_grid)
    surface_sum = np.zeros((n_l, n_l1))
    fold_choices = []
    fold_metrics = []
    total_flags = FoldFlags()
    t0 = time.perf_counter()

    for fold_no, (train_idx, test_idx) in enumerate(outer):
        inner_labels = dataset.labels[train_idx]
        inner = stratified_folds(
            inner_labels, ecfg.folds, ecfg.seed + 7919 * (fold_no + 1)
        )
        correct = np.zeros((n_l, n_l1))
        totals = np.zeros((n_l, n_l1))
        for in_train, in_test in inner:
            abs_train = [train_idx[i] for i in in_train]
            abs_test = [train_idx[i] for i in in_test]
            fold = train_fold(dataset, abs_train, pcfg)
            for i, lam in enumerate(ecfg.lambda_grid):
                for j, lam1 in enumerate(ecfg.lambda1_grid):
                    sub_fold = replace_weights(fold, lam, lam1)
                    outcomes = _classify_fold(sub_fold, dataset, abs_test, ecfg.threads)
                    correct[i, j] += sum(1 for o in outcomes if o.predicted == o.actual)
                    totals[i, j] += len(outcomes)
        inner_acc = correct / totals
        surface_sum += inner_acc
        lam, lam1 = _select_best(inner_acc.tolist(), ecfg.lambda_grid, ecfg.lambda1_grid)
        fold_choices.append((lam, lam1))
        chosen = replace(pcfg, lam=lam, lam1=lam1)
        metrics, flags, _ = _evaluate_split(dataset, train_idx, test_idx, chosen, ecfg.threads)
        fold_metrics.append(metrics)
        total_flags.merge(flags)

    surface = surface_sum / len(outer)
    best_lam, best_lam1 = _select_best(
        surface.tolist(), ecfg.lambda_grid, ecfg.lambda1_grid
    )
    grid = GridResult(
        lambda_grid=tuple(float(v) for v in ecfg.lambda_grid),
        lambda1_grid=tuple(float(v) for v in ecfg.lambda1_grid),
        surface=tuple(tuple(float(v) for v in row) for row in surface),
        best_lam=float(best_lam),
        best_lam1=float(best_lam1),
        fold_choices=tuple((float(a), float(b)) for a, b in fold_choices),
    )
    return GridOutcome(
        grid=grid,
        fold_metrics=tuple(fold_metrics),
        summary=_summarize(fold_metrics),
        flags=total_flags,
        stage_seconds={"grid_search": time.perf_counter() - t0},
    )


def replace_weights(fold: TrainedFold, lam: float, lam1: float) -> TrainedFold:
    """The trained artifacts are weight-independent; only the config changes."""
    return TrainedFold(
        bank=fold.bank,
        model=fold.model,
        dictionary=fold.dictionary,
        stacked_dictionary=fold.stacked_dictionary,
        config=replace(fold.config, lam=lam, lam1=lam1),
        flags=fold.flags,
    )


def _stratified_subsample(indices, labels, fraction: float, rng) -> list[int]:
    """Per-class subsample of the index list at the given fraction."""
    chosen = []
    for cls in (1, 2):
        cls_idx = [i for i in indices if labels[i] == cls]
        k = int(round(fraction * len(cls_idx)))
        k = max(1, min(k, len(cls_idx)))
        if k == len(cls_idx):
            chosen.extend(cls_idx)
        else:
            pick = rng.choice(len(cls_idx), size=k, replace=False)
            chosen.extend(cls_idx[p] for p in sorted(pick))
    return sorted(chosen)


def fraction_experiment(
    dataset: Dataset,
    pcfg: PipelineConfig,
    ecfg: EvalConfig,
    fractions=None,
) -> tuple[tuple[FractionRow, ...], FoldFlags, dict]:
    """Accuracy as the training portion shrinks.

    Per fraction and repeat, each fold's training set is subsampled with
    class stratification (test folds stay full-size so accuracies remain
    comparable); metrics are averaged over folds within a repeat, then
    mean/std is taken over repeats.
    """
    ecfg.validate()
    pcfg.validate(dataset)
    if fractions is None:
        fractions = ecfg.fractions
    labels = dataset.labels
    min_class = min(int(np.sum(labels == 1)), int(np.sum(labels == 2)))
    smallest = min(fractions)
    if int(np.floor(smallest * min_class)) < ecfg.folds:
        raise SamplingError(
            f"fraction {smallest} of the smaller class ({min_class} trials) "
            f"leaves fewer than {ecfg.folds} trials"
        )
    folds = stratified_folds(labels, ecfg.folds, ecfg.seed)
    rows = []
    total_flags = FoldFlags()
    t0 = time.perf_counter()
    for f_no, fraction in enumerate(fractions):
        rep_acc, rep_sen, rep_spe = [], [], []
        for rep in range(ecfg.repeats):
            rng = np.random.default_rng(
                np.random.SeedSequence([ecfg.seed, 0xF8AC, f_no, rep])
            )
            fold_metrics = []
            for train_idx, test_idx in folds:
                sub_train = (
                    list(train_idx)
                    if fraction >= 1.0
                    else _stratified_subsample(train_idx, labels, fraction, rng)
                )
                metrics, flags, _ = _evaluate_split(
                    dataset, sub_train, test_idx, pcfg, ecfg.threads
                )
                fold_metrics.append(metrics)
                total_flags.merge(flags)
            s = _summarize(fold_metrics)
            rep_acc.append(s["acc_mean"])
            rep_sen.append(s["sen_mean"])
            rep_spe.append(s["spe_mean"])
        acc_m, acc_s = _mean_std(rep_acc)
        sen_m, sen_s = _mean_std(rep_sen)
        spe_m, spe_s = _mean_std(rep_spe)
        rows.append(
            FractionRow(
                fraction=float(fraction),
                repeats=ecfg.repeats,
                acc_mean=acc_m,
                acc_std=acc_s,
                sen_mean=sen_m,
                sen_std=sen_s,
                spe_mean=spe_m,
                spe_std=spe_s,
            )
        )
    return (
        tuple(rows),
        total_flags,
        {"fractions": time.perf_counter() - t0},
    )


def results_from_cv(
    config_echo: dict,
    outcome: CvOutcome,
    pcfg: PipelineConfig,
    timings=None,
) -> RunResults:
    """Assemble the reportable results of a plain k-fold run."""
    folds = tuple(
        FoldResult(index=k, metrics=m, lam=pcfg.lam, lam1=pcfg.lam1)
        for k, m in enumerate(outcome.fold_metrics)
    )
    diagnostics = {
        f"coherence_band_{b}": v for b, v in sorted(outcome.coherence.items())
    }
    flags = {
        "var_floor_hits": outcome.flags.var_floor_hits,
        "zero_dictionary_columns": outcome.flags.zero_dictionary_columns,
        "classification_ties": outcome.flags.classification_ties,
    }
    return RunResults(
        config=config_echo,
        folds=folds,
        summary=outcome.summary,
        diagnostics=diagnostics,
        flags=flags,
        timings=timings,
    )
