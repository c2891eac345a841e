"""Dense symmetric linear-algebra kernel.

Symmetric eigendecomposition (cyclic Jacobi), whitening of SPD matrices,
and positive-definite solves.  All functions are pure: inputs are never
mutated and identical inputs give bit-identical outputs, which keeps the
spatial-filter training and the sparse solver reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import (
    AsymmetryError,
    ConvergenceError,
    DegenerateSystemError,
    DimensionError,
    ParameterError,
    RankDeficiencyError,
)

JACOBI_MAX_SWEEPS = 100
JACOBI_OFFDIAG_RTOL = 1e-12
ASYMMETRY_RTOL = 1e-10
EPS_PD_FACTOR = 1e-10
SPD_SOLVE_RTOL = 1e-9


def _as_finite_array(a, name):
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def _check_square_symmetric(A, name="A"):
    A = _as_finite_array(A, name)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    scale = max(float(np.max(np.abs(A))), 1.0)
    asym = float(np.max(np.abs(A - A.T)))
    if asym > ASYMMETRY_RTOL * scale:
        raise AsymmetryError(
            f"{name} is asymmetric: max|A - A^T| = {asym:.3e} "
            f"exceeds {ASYMMETRY_RTOL:.0e} * {scale:.3e}"
        )
    return A


@dataclass(frozen=True)
class SymEigResult:
    """Full spectrum of a symmetric matrix.

    ``eigenvalues`` are sorted descending; ``eigenvectors`` holds the
    matching orthonormal eigenvectors as columns, each flipped so its
    largest-magnitude entry is positive (deterministic sign convention).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _offdiag_frobenius(B):
    # sum the off-diagonal squares directly: subtracting the diagonal mass
    # from the full Frobenius norm cancels catastrophically near convergence
    off = B.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def sym_eig(A) -> SymEigResult:
    """Eigendecompose a symmetric matrix with cyclic Jacobi rotations.

    Parameters
    ----------
    A : (n, n) array_like
        Symmetric within 1e-10 relative asymmetry.

    Returns
    -------
    SymEigResult
        Eigenvalues descending, eigenvectors column-aligned, orthonormal.

    Raises
    ------
    DimensionError, AsymmetryError
        On a non-square or asymmetric input.
    ConvergenceError
        If the off-diagonal mass has not vanished after the sweep cap.
    """
    A = _check_square_symmetric(A, "A")
    n = A.shape[0]
    B = 0.5 * (A + A.T)  # work copy, exactly symmetric
    V = np.eye(n)
    tol = JACOBI_OFFDIAG_RTOL * float(np.linalg.norm(A, "fro"))

    converged = _offdiag_frobenius(B) <= tol
    for _ in range(JACOBI_MAX_SWEEPS):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = B[p, q]
                if apq == 0.0:
                    continue
                # classical Jacobi rotation annihilating B[p, q]
                gap = B[q, q] - B[p, p]
                if abs(gap) > 1e100 * abs(apq):
                    t = apq / gap  # asymptotic small-angle tangent
                elif gap == 0.0:
                    t = 1.0
                else:
                    theta = gap / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                bp = B[:, p].copy()
                bq = B[:, q].copy()
                B[:, p] = c * bp - s * bq
                B[:, q] = s * bp + c * bq
                bp = B[p, :].copy()
                bq = B[q, :].copy()
                B[p, :] = c * bp - s * bq
                B[q, :] = s * bp + c * bq
                B[p, q] = 0.0
                B[q, p] = 0.0

                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        converged = _offdiag_frobenius(B) <= tol
    if not converged:
        raise ConvergenceError(
            f"Jacobi eigendecomposition did not converge within "
            f"{JACOBI_MAX_SWEEPS} sweeps (off-diagonal norm "
            f"{_offdiag_frobenius(B):.3e} > tol {tol:.3e})"
        )

    eigenvalues = np.diag(B).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    V = V[:, order]
    # sign convention: largest-magnitude entry of each eigenvector positive
    for j in range(n):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0.0:
            V[:, j] = -V[:, j]
    eigenvalues.setflags(write=False)
    V.setflags(write=False)
    return SymEigResult(eigenvalues=eigenvalues, eigenvectors=V)


def eps_pd(C) -> float:
    """Positive-definiteness floor used by :func:`whiten`."""
    C = np.asarray(C, dtype=np.float64)
    return EPS_PD_FACTOR * float(np.trace(C)) / C.shape[0]


def whiten(C) -> np.ndarray:
    """Whitening transform P of an SPD matrix: P C P^T = I.

    Raises
    ------
    RankDeficiencyError
        If the smallest eigenvalue of C falls at or below the floor
        ``1e-10 * trace(C) / n``; the offending eigenvalue is attached.
    """
    res = sym_eig(C)
    floor = eps_pd(C)
    smallest = float(res.eigenvalues[-1])
    if smallest <= floor:
        raise RankDeficiencyError(
            f"matrix is rank deficient for whitening: smallest eigenvalue "
            f"{smallest:.6e} <= floor {floor:.6e}",
            eigenvalue=smallest,
        )
    P = (res.eigenvectors / np.sqrt(res.eigenvalues)).T
    return P


def solve_spd(A, b) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky.

    One step of iterative refinement is applied so the residual meets
    ``|A x - b| <= 1e-9 (1 + |b|)``; failure to factor or to meet the
    residual bound raises :class:`DegenerateSystemError` so the caller
    can shrink its active set.
    """
    A = _check_square_symmetric(A, "A")
    b = _as_finite_array(b, "b")
    if b.ndim != 1 or b.shape[0] != A.shape[0]:
        raise DimensionError(
            f"right-hand side shape {b.shape} does not match A {A.shape}"
        )
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
        x = cho_solve(factor, b, check_finite=False)
        x = x + cho_solve(factor, b - A @ x, check_finite=False)
    except LinAlgError as exc:
        raise DegenerateSystemError(
            f"Cholesky factorization failed: {exc}"
        ) from exc
    resid = float(np.linalg.norm(A @ x - b))
    bound = SPD_SOLVE_RTOL * (1.0 + float(np.linalg.norm(b)))
    if not np.isfinite(resid) or resid > bound:
        raise DegenerateSystemError(
            f"SPD solve residual {resid:.3e} exceeds bound {bound:.3e}; "
            f"system is effectively degenerate"
        )
    return x
