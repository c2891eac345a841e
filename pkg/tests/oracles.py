"""Independent reference computations used to pin expected test values.

Everything here is deliberately brute force and shares no code path with
the package: objectives are re-derived from their definitions and the
sparse problems are solved by enumerating sign patterns.
"""

import itertools

import numpy as np


def objective_reference(u, y_bands, blocks, lam, lam1):
    """Re-evaluate the multi-band objective from scratch.

    Data term per band, l1 on everything, and the centering penalty in its
    direct sum-of-squared-deviations form.
    """
    u = np.asarray(u, dtype=np.float64)
    total = 0.0
    for b, (y, D) in enumerate(zip(y_bands, blocks)):
        r = np.asarray(y) - np.asarray(D) @ u[:, b]
        total += 0.5 * float(np.dot(r, r))
    total += lam * float(np.abs(u).sum())
    mean = u.mean(axis=1)
    dev = 0.0
    for b in range(u.shape[1]):
        diff = u[:, b] - mean
        dev += float(np.dot(diff, diff))
    total += 0.5 * lam1 * dev
    return total


def _full_quadratic(y_bands, blocks, lam1):
    """Quadratic form of the smooth part over vec(u), bands stacked."""
    B = len(blocks)
    n = blocks[0].shape[1]
    P = np.eye(B) - np.full((B, B), 1.0 / B)
    M = P @ P
    dim = n * B
    Q = np.zeros((dim, dim))
    c = np.zeros(dim)
    const = 0.0
    for b in range(B):
        D = np.asarray(blocks[b], dtype=np.float64)
        y = np.asarray(y_bands[b], dtype=np.float64)
        sl = slice(b * n, (b + 1) * n)
        Q[sl, sl] += D.T @ D
        c[sl] += D.T @ y
        const += 0.5 * float(y @ y)
    for bi in range(B):
        for bj in range(B):
            Q[bi * n:(bi + 1) * n, bj * n:(bj + 1) * n] += (
                lam1 * M[bi, bj] * np.eye(n)
            )
    return Q, c, const


def solve_by_sign_enumeration(y_bands, blocks, lam, lam1):
    """Global minimum of the multi-band objective by sign enumeration.

    For every support, all sign assignments of the free coordinates are
    solved as equality-free quadratics; sign-consistent candidates are
    scored with the exact objective.  Exponential in n * B: desk scale
    only.

    Returns (best objective, best coefficient matrix).
    """
    B = len(blocks)
    n = blocks[0].shape[1]
    Q, c, const = _full_quadratic(y_bands, blocks, lam1)
    dim = n * B

    best_obj = const  # all-zero candidate
    best_u = np.zeros((n, B))
    idx = np.arange(dim)
    for support_size in range(1, dim + 1):
        for support in itertools.combinations(idx, support_size):
            sup = np.array(support)
            Qs = Q[np.ix_(sup, sup)]
            cs = c[sup]
            # batch-solve all sign assignments of this support
            signs = np.array(
                list(itertools.product((-1.0, 1.0), repeat=support_size))
            ).T  # (k, 2^k)
            rhs = cs[:, None] - lam * signs
            try:
                sols = np.linalg.solve(Qs, rhs)
            except np.linalg.LinAlgError:
                sols, *_ = np.linalg.lstsq(Qs, rhs, rcond=None)
            # keep only genuinely stationary, sign-consistent candidates;
            # near-singular solves can return garbage that must not score
            resid = np.max(np.abs(Qs @ sols - rhs), axis=0)
            ok = resid <= 1e-8 * (1.0 + np.max(np.abs(rhs), axis=0))
            consistent = np.all(np.sign(sols) == signs, axis=0) & ok
            for k in np.nonzero(consistent)[0]:
                v = np.zeros(dim)
                v[sup] = sols[:, k]
                obj = (
                    0.5 * float(v @ (Q @ v))
                    - float(c @ v)
                    + const
                    + lam * float(np.abs(v).sum())
                )
                if obj < best_obj:
                    best_obj = obj
                    best_u = v.reshape(B, n).T
    return best_obj, best_u


def nearest_neighbor_label(y_stack, train_stack, train_labels):
    """1-NN by euclidean distance on stacked feature vectors."""
    d = np.linalg.norm(train_stack - y_stack[:, None], axis=0)
    return int(train_labels[int(np.argmin(d))])
