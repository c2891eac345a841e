"""Multi-band sparse group representation and residual classification.

The composite dictionary holds one block of training feature columns per
band.  A test trial's per-band features are represented jointly: one
coefficient column per band, an l1 penalty on every column, and a
cross-band centering penalty that pulls the per-band coefficient columns
toward their mean,

    F(u) = sum_b 0.5 ||y_b - D_b u_b||^2 + lam * sum_b ||u_b||_1
           + (lam1 / 2) * Tr(u M u^T),      M = (I - (1/B) 1 1^T)^2.

F is minimized by block coordinate descent over bands; each band's
subproblem is a quadratic plus l1 solved exactly by feature-sign search.
Classification keeps the coefficients of one class at a time and picks
the class with the smallest stacked reconstruction residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import linalg
from .csp import FeatureVector
from .errors import (
    ConvergenceError,
    DegenerateSystemError,
    DimensionError,
    EmptyClassError,
    ParameterError,
    SolverError,
)

TOL_KKT = 1e-6
DEFAULT_MAX_OUTER_ITERS = 200
DEFAULT_TOL = 1e-8
NORM_SLACK = 1e-12


def centering_matrix(band_count: int) -> np.ndarray:
    """(I - (1/B) 1 1^T)^2: symmetric, idempotent, zero row sums."""
    if band_count < 1:
        raise ParameterError(f"band count must be >= 1, got {band_count}")
    P = np.eye(band_count) - np.full((band_count, band_count), 1.0 / band_count)
    return P @ P


@dataclass(frozen=True, eq=False)
class BandDictionary:
    """Per-band feature blocks sharing column metadata.

    ``blocks[b]`` is the (2M, N) matrix whose column i holds the band-b
    features of training trial i; columns are ordered class 1 first.
    """

    blocks: tuple[np.ndarray, ...]
    column_class: np.ndarray
    column_trial: np.ndarray
    scale_factors: Optional[np.ndarray] = None
    zero_columns: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.blocks:
            raise ParameterError("dictionary needs at least one band block")
        blocks = tuple(np.asarray(b, dtype=np.float64) for b in self.blocks)
        n = blocks[0].shape[1]
        for b in blocks:
            if b.ndim != 2 or b.shape[1] != n:
                raise DimensionError("band blocks must share the column count")
            if not np.all(np.isfinite(b)):
                raise ParameterError("dictionary block contains non-finite entries")
            b.setflags(write=False)
        cls = np.asarray(self.column_class, dtype=np.int64)
        tri = np.asarray(self.column_trial, dtype=np.int64)
        if cls.shape != (n,) or tri.shape != (n,):
            raise DimensionError("column metadata length must match column count")
        if not np.all(np.isin(cls, (1, 2))):
            raise ParameterError("column classes must be 1 or 2")
        cls.setflags(write=False)
        tri.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "column_class", cls)
        object.__setattr__(self, "column_trial", tri)

    @property
    def band_count(self) -> int:
        return len(self.blocks)

    @property
    def n_columns(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def feature_dim(self) -> int:
        return self.blocks[0].shape[0]

    def max_column_norm(self) -> float:
        return max(float(np.max(np.linalg.norm(b, axis=0))) for b in self.blocks)


def build_dictionary(train_features: Sequence[FeatureVector]) -> BandDictionary:
    """Stack labeled training feature vectors into per-band blocks.

    Columns are grouped by class (all class-1 trials first, then class-2),
    preserving the input order within each class; ``column_trial`` records
    each column's index in ``train_features``.
    """
    if not train_features:
        raise EmptyClassError("no training features supplied")
    band_count = len(train_features[0].per_band)
    order = [i for i, f in enumerate(train_features) if f.label == 1]
    order += [i for i, f in enumerate(train_features) if f.label == 2]
    if len(order) != len(train_features):
        raise ParameterError("every training feature needs a label of 1 or 2")
    classes = np.array([train_features[i].label for i in order], dtype=np.int64)
    if 1 not in classes or 2 not in classes:
        missing = 1 if 1 not in classes else 2
        raise EmptyClassError(f"no training features with label {missing}")

    blocks = []
    for b in range(band_count):
        cols = []
        for i in order:
            fv = train_features[i]
            if len(fv.per_band) != band_count:
                raise DimensionError("training features disagree on band count")
            cols.append(fv.per_band[b])
        blocks.append(np.column_stack(cols))
    return BandDictionary(
        blocks=tuple(blocks),
        column_class=classes,
        column_trial=np.array(order, dtype=np.int64),
    )


def normalize_columns(dic: BandDictionary) -> BandDictionary:
    """Cap every column of every block at unit l2 norm.

    Columns with norm <= 1 are left untouched (the constraint is an
    inequality); zero columns are kept as zero and flagged.  The applied
    scale factors are retained for diagnostics.
    """
    scales = np.ones((dic.band_count, dic.n_columns))
    zero_cols = []
    blocks = []
    for b, block in enumerate(dic.blocks):
        norms = np.linalg.norm(block, axis=0)
        scale = np.ones_like(norms)
        over = norms > 1.0
        scale[over] = 1.0 / norms[over]
        for j in np.nonzero(norms == 0.0)[0]:
            zero_cols.append((b, int(j)))
        blocks.append(block * scale)
        scales[b] = scale
    return BandDictionary(
        blocks=tuple(blocks),
        column_class=dic.column_class,
        column_trial=dic.column_trial,
        scale_factors=scales,
        zero_columns=tuple(zero_cols),
    )


def cap_unit_norm(v) -> np.ndarray:
    """Scale a vector down to unit l2 norm if it exceeds it (else unchanged)."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    return v / n if n > 1.0 else v.copy()


def mutual_coherence(left, right) -> float:
    """Largest |<l_j, r_k>| over column pairs of two normalized matrices."""
    L = np.asarray(left, dtype=np.float64)
    R = np.asarray(right, dtype=np.float64)
    if L.ndim != 2 or R.ndim != 2 or L.shape[0] != R.shape[0]:
        raise DimensionError(
            f"matrices must share the row count, got {L.shape} and {R.shape}"
        )
    for name, m in (("left", L), ("right", R)):
        worst = float(np.max(np.linalg.norm(m, axis=0)))
        if worst > 1.0 + 1e-6:
            raise ParameterError(
                f"{name} matrix has a column of norm {worst:.6f} > 1; "
                f"normalize columns first"
            )
    return float(np.max(np.abs(L.T @ R)))


@dataclass(frozen=True)
class SgfbHyperparams:
    """Solver weights and stopping rule."""

    lam: float
    lam1: float
    max_outer_iters: int = DEFAULT_MAX_OUTER_ITERS
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ParameterError(f"lam must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.lam1) and self.lam1 >= 0.0):
            raise ParameterError(f"lam1 must be finite and >= 0, got {self.lam1}")
        if self.max_outer_iters < 1:
            raise ParameterError("max_outer_iters must be >= 1")
        if self.tol < 0.0:
            raise ParameterError("tol must be >= 0")


@dataclass(frozen=True, eq=False)
class SparseCode:
    """Solver output: coefficient matrix (columns indexed by band)."""

    coeffs: np.ndarray
    signs: np.ndarray
    objective: float
    iterations: int
    objective_trace: tuple[float, ...]
    fss_steps: int

    @property
    def band_count(self) -> int:
        return self.coeffs.shape[1]


def _check_y_bands(y_bands, dic: BandDictionary):
    if len(y_bands) != dic.band_count:
        raise DimensionError(
            f"got {len(y_bands)} band vectors for a {dic.band_count}-band dictionary"
        )
    ys = []
    for b, y in enumerate(y_bands):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != dic.blocks[b].shape[0]:
            raise DimensionError(
                f"band {b} vector has shape {y.shape}, expected "
                f"({dic.blocks[b].shape[0]},)"
            )
        if not np.all(np.isfinite(y)):
            raise ParameterError(f"band {b} vector contains non-finite entries")
        ys.append(y)
    return ys


def coupling_penalty_sum(u) -> float:
    """Sum over bands of ||u_b - mean_b u_b||^2 (direct form)."""
    u = np.asarray(u, dtype=np.float64)
    centered = u - u.mean(axis=1, keepdims=True)
    return float(np.sum(centered * centered))


def coupling_penalty_trace(u, M=None) -> float:
    """Tr(u M u^T) with the centering matrix (trace form)."""
    u = np.asarray(u, dtype=np.float64)
    if M is None:
        M = centering_matrix(u.shape[1])
    return float(np.sum((u @ M) * u))


def objective_value(u, y_bands, dic: BandDictionary, hp: SgfbHyperparams) -> float:
    """Full objective F(u) evaluated from its definition."""
    u = np.asarray(u, dtype=np.float64)
    ys = _check_y_bands(y_bands, dic)
    if u.shape != (dic.n_columns, dic.band_count):
        raise DimensionError(
            f"coefficients have shape {u.shape}, expected "
            f"({dic.n_columns}, {dic.band_count})"
        )
    data = 0.0
    for b, y in enumerate(ys):
        r = y - dic.blocks[b] @ u[:, b]
        data += 0.5 * float(r @ r)
    l1 = hp.lam * float(np.sum(np.abs(u)))
    coupling = 0.5 * hp.lam1 * coupling_penalty_trace(u)
    return data + l1 + coupling


_FSS_STEP_FACTOR = 200


def _restricted_obj(A_hat, c_hat, lam, v):
    return (
        0.5 * float(v @ (A_hat @ v))
        - float(c_hat @ v)
        + lam * float(np.sum(np.abs(v)))
    )


def _feature_sign_search(A, c, lam, x0=None):
    """Minimize 0.5 x^T A x - c^T x + lam ||x||_1 by feature-sign search.

    Active-set method: activate the worst zero coefficient with a guessed
    sign, solve the sign-fixed quadratic analytically, then line-search to
    the first sign flip.  Singular active quadratics (rank-deficient Gram,
    no coupling ridge) are handled by exact one-coordinate descent, the
    minimum-norm stationary point, or a slide along the null-space descent
    direction until a coefficient crosses zero and leaves the active set;
    each step strictly decreases the objective, so the search terminates.

    Returns the minimizer and the step count.
    """
    n = c.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    theta = np.sign(x)
    active = [int(j) for j in np.nonzero(x)[0]]
    atol = 1e-9 * (1.0 + (float(np.max(np.abs(c))) if n else 0.0))
    max_steps = _FSS_STEP_FACTOR * (n + 10)
    steps = 0

    while True:
        grad = A @ x - c
        if active:
            act = np.asarray(active)
            nz_viol = float(np.max(np.abs(grad[act] + lam * theta[act])))
        else:
            nz_viol = 0.0
        if nz_viol <= atol:
            zero_mask = theta == 0.0
            if np.any(zero_mask):
                gz = np.abs(np.where(zero_mask, grad, 0.0))
                j = int(np.argmax(gz))
                if gz[j] <= lam + atol:
                    break
                theta[j] = -np.sign(grad[j])
                active.append(j)
            else:
                break

        steps += 1
        if steps > max_steps:
            raise ConvergenceError(
                f"feature-sign search exceeded {max_steps} steps "
                f"(problem size {n})"
            )
        act = np.asarray(active)
        A_hat = A[np.ix_(act, act)]
        c_hat = c[act]
        try:
            x_new = linalg.solve_spd(A_hat, c_hat - lam * theta[act])
        except DegenerateSystemError:
            if _degenerate_step(A, c, lam, x, theta, active, grad, atol):
                continue
            raise ConvergenceError(
                "feature-sign search stalled on a degenerate active set"
            )

        x_old = x[act]
        best_v = x_new
        best_q = _restricted_obj(A_hat, c_hat, lam, x_new)
        flips = np.nonzero(x_old * x_new < 0.0)[0]
        for i in flips:
            t = x_old[i] / (x_old[i] - x_new[i])
            v = x_old + t * (x_new - x_old)
            v[i] = 0.0
            q = _restricted_obj(A_hat, c_hat, lam, v)
            if q < best_q:
                best_q = q
                best_v = v
        _commit(x, theta, active, act, best_v)
    return x, steps


def _commit(x, theta, active, act, values):
    """Write a line-search result back and retire exact zeros."""
    x[act] = values
    if np.any(values == 0.0):
        active[:] = [j for j in active if x[j] != 0.0]
    for j in act:
        theta[j] = np.sign(x[j])


def _degenerate_step(A, c, lam, x, theta, active, grad, atol):
    """Make strict progress when the active quadratic is singular.

    Three sub-cases: a freshly activated coefficient still at zero gets an
    exact one-coordinate minimization; a bounded flat quadratic takes its
    minimum-norm stationary point through the usual line search; an
    unbounded one slides along the null-space descent direction until the
    first active coefficient crosses zero (such a crossing must exist for
    lam > 0).  Returns True when progress was made.
    """
    fresh = [j for j in active if x[j] == 0.0]
    if fresh:
        j = fresh[-1]
        if A[j, j] <= 0.0:
            raise SolverError(
                f"coordinate {j} has non-positive curvature {A[j, j]!r}; "
                f"problem is ill-posed"
            )
        g = -grad[j]  # partial correlation at x_j = 0
        x[j] = np.sign(g) * max(abs(g) - lam, 0.0) / A[j, j]
        if x[j] == 0.0:
            active.remove(j)
        theta[j] = np.sign(x[j])
        return True

    act = np.asarray(active)
    A_hat = A[np.ix_(act, act)]
    c_hat = c[act]
    b_hat = c_hat - lam * theta[act]
    x_old = x[act]
    q_old = _restricted_obj(A_hat, c_hat, lam, x_old)

    x_ln, *_ = np.linalg.lstsq(A_hat, b_hat, rcond=None)
    null_part = b_hat - A_hat @ x_ln
    if float(np.max(np.abs(null_part))) <= atol:
        # bounded flat quadratic: the min-norm point is a true minimizer
        best_v = x_ln
        best_q = _restricted_obj(A_hat, c_hat, lam, x_ln)
        flips = np.nonzero(x_old * x_ln < 0.0)[0]
        for i in flips:
            t = x_old[i] / (x_old[i] - x_ln[i])
            v = x_old + t * (x_ln - x_old)
            v[i] = 0.0
            q = _restricted_obj(A_hat, c_hat, lam, v)
            if q < best_q:
                best_q = q
                best_v = v
        if best_q > q_old + atol:
            return False
        _commit(x, theta, active, act, best_v)
        return True

    if lam == 0.0:
        raise SolverError(
            "unconstrained quadratic is unbounded below (lam = 0 with a "
            "rank-deficient dictionary)"
        )
    # slide along the null-space descent direction to the first zero crossing
    d = null_part
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = np.where(x_old * d < 0.0, -x_old / d, np.inf)
    i_star = int(np.argmin(ts))
    t_star = float(ts[i_star])
    if not np.isfinite(t_star):
        return False
    v = x_old + t_star * d
    v[i_star] = 0.0
    if _restricted_obj(A_hat, c_hat, lam, v) > q_old + atol:
        return False
    _commit(x, theta, active, act, v)
    return True


def _band_systems(y_bands, dic, hp):
    """Per-band Gram-plus-ridge matrices and correlations."""
    M = centering_matrix(dic.band_count)
    systems = []
    for b, y in enumerate(y_bands):
        D = dic.blocks[b]
        A = D.T @ D + hp.lam1 * M[b, b] * np.eye(dic.n_columns)
        systems.append((A, D.T @ y))
    return M, systems


def kkt_violation(u, y_bands, dic: BandDictionary, hp: SgfbHyperparams) -> float:
    """Worst stationarity violation of a coefficient matrix.

    For nonzero coefficients: |grad + lam * sign|; for zeros the amount by
    which |grad| exceeds lam.  A code is optimal when this is ~0.
    """
    u = np.asarray(u, dtype=np.float64)
    ys = _check_y_bands(y_bands, dic)
    M, systems = _band_systems(ys, dic, hp)
    worst = 0.0
    for b, (A, r) in enumerate(systems):
        h = hp.lam1 * (u @ M[:, b] - M[b, b] * u[:, b])
        grad = A @ u[:, b] - (r - h)
        nz = u[:, b] != 0.0
        if np.any(nz):
            worst = max(worst, float(np.max(np.abs(grad[nz] + hp.lam * np.sign(u[nz, b])))))
        if np.any(~nz):
            worst = max(worst, float(np.max(np.maximum(np.abs(grad[~nz]) - hp.lam, 0.0))))
    return worst


def sgfb_solve(y_bands, dic: BandDictionary, hp: SgfbHyperparams) -> SparseCode:
    """Jointly solve the multi-band sparse representation of one trial.

    Block coordinate descent over band columns; each block is solved by
    feature-sign search on its quadratic (the coupling enters as a ridge
    on the diagonal plus a linear term from the other bands).  Stops when
    the objective decrease drops below ``hp.tol`` (relative) and the
    stationarity conditions hold at ``TOL_KKT``, or at the iteration cap.
    """
    ys = _check_y_bands(y_bands, dic)
    if dic.max_column_norm() > 1.0 + NORM_SLACK:
        raise ParameterError(
            "dictionary is not normalized: call normalize_columns first"
        )
    n, B = dic.n_columns, dic.band_count
    M, systems = _band_systems(ys, dic, hp)
    u = np.zeros((n, B))
    trace = [objective_value(u, ys, dic, hp)]
    total_steps = 0
    iterations = 0
    f_prev = trace[0]

    for _ in range(hp.max_outer_iters):
        iterations += 1
        for b, (A, r) in enumerate(systems):
            h = hp.lam1 * (u @ M[:, b] - M[b, b] * u[:, b])
            x, steps = _feature_sign_search(A, r - h, hp.lam, x0=u[:, b])
            u[:, b] = x
            total_steps += steps
        f = objective_value(u, ys, dic, hp)
        if not np.isfinite(f):
            raise SolverError(
                f"objective became non-finite at outer iteration {iterations}",
                trace=trace,
            )
        trace.append(f)
        if f > f_prev + 1e-9 * max(1.0, abs(f_prev)):
            raise SolverError(
                f"objective increased from {f_prev!r} to {f!r} at outer "
                f"iteration {iterations}",
                trace=trace,
            )
        decreased = f_prev - f
        f_prev = f
        if decreased < hp.tol * max(1.0, abs(f_prev)):
            if kkt_violation(u, ys, dic, hp) <= TOL_KKT:
                break

    signs = np.sign(u).astype(np.int8)
    u = u.copy()
    u.setflags(write=False)
    signs.setflags(write=False)
    return SparseCode(
        coeffs=u,
        signs=signs,
        objective=trace[-1],
        iterations=iterations,
        objective_trace=tuple(trace),
        fss_steps=total_steps,
    )


@dataclass(frozen=True)
class ClassDecision:
    """Predicted label with the per-class stacked residuals."""

    label: int
    residuals: tuple[float, float]
    tie: bool


def _residual_decision(residuals) -> ClassDecision:
    r1, r2 = float(residuals[0]), float(residuals[1])
    tie = abs(r1 - r2) <= 1e-12 * max(1.0, r1, r2)
    label = 1 if (tie or r1 <= r2) else 2
    return ClassDecision(label=label, residuals=(r1, r2), tie=tie)


def classify(y_bands, dic: BandDictionary, code: SparseCode) -> ClassDecision:
    """Assign the class whose coefficients reconstruct the trial best.

    The class-l residual stacks all bands: sqrt of the summed squared
    per-band residuals using only the columns of class l.  Ties go to the
    smaller class id and are flagged.
    """
    ys = _check_y_bands(y_bands, dic)
    if code.coeffs.shape != (dic.n_columns, dic.band_count):
        raise DimensionError(
            f"code shape {code.coeffs.shape} does not match dictionary "
            f"({dic.n_columns}, {dic.band_count})"
        )
    residuals = []
    for label in (1, 2):
        mask = (dic.column_class == label).astype(np.float64)
        total = 0.0
        for b, y in enumerate(ys):
            r = y - dic.blocks[b] @ (code.coeffs[:, b] * mask)
            total += float(r @ r)
        residuals.append(np.sqrt(total))
    return _residual_decision(residuals)


def src_solve(y, X, lam, max_steps_hint: Optional[int] = None) -> np.ndarray:
    """Single-task l1 representation of y over normalized columns of X."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionError(
            f"shapes disagree: X {X.shape}, y {y.shape}"
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ParameterError("inputs contain non-finite entries")
    worst = float(np.max(np.linalg.norm(X, axis=0)))
    if worst > 1.0 + NORM_SLACK:
        raise ParameterError(
            f"columns of X must have norm <= 1 (max is {worst:.6f})"
        )
    if not (np.isfinite(lam) and lam >= 0.0):
        raise ParameterError(f"lam must be finite and >= 0, got {lam}")
    x, _ = _feature_sign_search(X.T @ X, X.T @ y, lam)
    return x


def src_classify(y, X, coeffs, column_class) -> ClassDecision:
    """Residual classification for the single-task representation."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    column_class = np.asarray(column_class, dtype=np.int64)
    if coeffs.shape != (X.shape[1],) or column_class.shape != (X.shape[1],):
        raise DimensionError("coefficient or class vector does not match X")
    residuals = []
    for label in (1, 2):
        mask = (column_class == label).astype(np.float64)
        r = y - X @ (coeffs * mask)
        residuals.append(float(np.linalg.norm(r)))
    return _residual_decision(residuals)
