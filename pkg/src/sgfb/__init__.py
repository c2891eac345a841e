"""Sparse group filter bank pipeline for motor-imagery EEG classification.

Butterworth filter bank -> per-band CSP log-variance features -> joint
multi-band sparse representation (feature-sign search with a cross-band
centering penalty) -> minimum-residual classification, plus the
cross-validation harness, dataset container, and batch CLI around it.
"""

__version__ = "0.1.0"

from .csp import (
    CspModel,
    FeatureVector,
    class_covariance,
    extract_features,
    fit_csp,
    fit_csp_model,
    normalized_covariance,
)
from .dataio import Dataset, SynthConfig, generate_synthetic, load_dataset, save_dataset
from .epochs import EegEpoch
from .errors import SgfbError
from .evaluate import (
    EvalConfig,
    compute_metrics,
    fraction_experiment,
    grid_search,
    kfold_cv,
    stratified_folds,
)
from .filterbank import (
    BandSpec,
    FilterBank,
    IirFilter,
    apply_zero_phase,
    design_bandpass,
    frequency_response,
    split_subbands,
)
from .linalg import SymEigResult, solve_spd, sym_eig, whiten
from .pipeline import PipelineConfig, TrainedFold, classify_trial, train_fold
from .report import (
    Metrics,
    RunResults,
    read_report,
    write_report,
)
from .sparse import (
    BandDictionary,
    SgfbHyperparams,
    SparseCode,
    build_dictionary,
    centering_matrix,
    classify,
    mutual_coherence,
    normalize_columns,
    objective_value,
    sgfb_solve,
    src_classify,
    src_solve,
)

__all__ = [
    "BandDictionary",
    "BandSpec",
    "CspModel",
    "Dataset",
    "EegEpoch",
    "EvalConfig",
    "FeatureVector",
    "FilterBank",
    "IirFilter",
    "Metrics",
    "PipelineConfig",
    "RunResults",
    "SgfbError",
    "SgfbHyperparams",
    "SparseCode",
    "SymEigResult",
    "SynthConfig",
    "TrainedFold",
    "apply_zero_phase",
    "build_dictionary",
    "centering_matrix",
    "class_covariance",
    "classify",
    "classify_trial",
    "compute_metrics",
    "design_bandpass",
    "extract_features",
    "fit_csp",
    "fit_csp_model",
    "fraction_experiment",
    "frequency_response",
    "generate_synthetic",
    "grid_search",
    "kfold_cv",
    "load_dataset",
    "mutual_coherence",
    "normalize_columns",
    "normalized_covariance",
    "objective_value",
    "read_report",
    "save_dataset",
    "sgfb_solve",
    "solve_spd",
    "split_subbands",
    "src_classify",
    "src_solve",
    "stratified_folds",
    "sym_eig",
    "train_fold",
    "whiten",
    "write_report",
]
