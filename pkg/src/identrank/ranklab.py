"""Numerical rank decisions: SVD, tolerance policy, null spaces, subset search.

The singular value decomposition is a one-sided Jacobi iteration, which is
simple and highly accurate for the small dense matrices this library sees
(at most ~20 rows/columns on the short side).  Very tall problems are first
reduced with a QR factorization.  Every rank decision records its singular
values, the tolerances, the threshold actually applied and the gap ratio
sigma_{r+1}/sigma_r so borderline calls are visible to the caller.

Default thresholding: sigma_i counts toward the rank when
sigma_i > tol_rel * sigma_1 + tol_abs, with tol_rel = 1e-8 and
tol_abs = 1e-12.  Rank is treated as exact in the underlying theory; the
gap ratio is the honest signal that a numerical decision was borderline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError

DEFAULT_TOL_REL = 1e-8
DEFAULT_TOL_ABS = 1e-12

_EPS = float(np.finfo(float).eps)
_CONV_TOL = 40.0 * _EPS
_MAX_SWEEPS = 60
_QR_REDUCE_RATIO = 4
_QR_REDUCE_MIN = 64


@dataclass(frozen=True)
class RankDecision:
    """Outcome of a numerical rank test.

    rank counts the singular values above ``threshold_used`` where
    ``threshold_used = tol_rel * sigma_1 + tol_abs``.  ``gap_ratio`` is
    sigma_{rank+1} / sigma_rank, or 0.0 when the rank is full or zero.
    """

    rank: int
    singular_values: tuple
    tol_rel: float
    tol_abs: float
    threshold_used: float
    gap_ratio: float

    def to_dict(self):
        return {
            "rank": self.rank,
            "singular_values": list(self.singular_values),
            "tol_rel": self.tol_rel,
            "tol_abs": self.tol_abs,
            "threshold_used": self.threshold_used,
            "gap_ratio": self.gap_ratio,
        }


@dataclass(frozen=True)
class SubsetRankResult:
    """Largest full-rank principal submatrix found by :func:`max_rank_subset`."""

    k: int
    subset: tuple
    method: str
    verified: bool


def _check_finite(M):
    if not np.all(np.isfinite(M)):
        raise InputError("matrix contains non-finite entries")


def _jacobi_columns(A):
    """One-sided Jacobi on the columns of A (m x n, m >= n).

    Rotates column pairs until all are mutually orthogonal relative to
    machine precision.  Returns (A_rotated, V) with A_original = A_rotated V^T
    and V orthogonal n x n; the rotated columns are sigma_i * u_i.
    """
    A = np.array(A, dtype=float, order="F")
    n = A.shape[1]
    V = np.eye(n)
    for _ in range(_MAX_SWEEPS):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai = A[:, i]
                aj = A[:, j]
                aii = float(ai @ ai)
                ajj = float(aj @ aj)
                aij = float(ai @ aj)
                if aii == 0.0 or ajj == 0.0 or aij == 0.0:
                    continue
                # sqrt factors separately: the product can underflow to 0
                denom = math.sqrt(aii) * math.sqrt(ajj)
                rel = abs(aij) / denom
                off = max(off, rel)
                if rel <= _CONV_TOL:
                    continue
                zeta = (ajj - aii) / (2.0 * aij)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                cs = 1.0 / math.hypot(1.0, t)
                sn = cs * t
                new_i = cs * ai - sn * aj
                new_j = sn * ai + cs * aj
                A[:, i] = new_i
                A[:, j] = new_j
                vi = V[:, i].copy()
                vj = V[:, j].copy()
                V[:, i] = cs * vi - sn * vj
                V[:, j] = sn * vi + cs * vj
        if off <= _CONV_TOL:
            break
    return A, V


def _complete_orthonormal(Q, dim):
    """Extend the orthonormal columns of Q (dim x k) to a full basis of R^dim.

    Deterministic: candidates are the canonical basis vectors, and the one
    with the largest residual after projection is taken at each step.
    """
    cols = [Q[:, i] for i in range(Q.shape[1])]
    added = []
    while len(cols) < dim:
        best = None
        best_norm = -1.0
        for c in range(dim):
            v = np.zeros(dim)
            v[c] = 1.0
            for q in cols:
                v = v - (q @ v) * q
            nv = float(np.linalg.norm(v))
            if nv > best_norm + 1e-12:
                best_norm = nv
                best = v
        v = best / best_norm
        # one re-orthogonalization pass keeps the basis clean
        for q in cols:
            v = v - (q @ v) * q
        v = v / np.linalg.norm(v)
        cols.append(v)
        added.append(v)
    return np.column_stack(added) if added else np.zeros((dim, 0))


def svd(M):
    """Singular value decomposition M = U diag(s) V^T via one-sided Jacobi.

    Economy form: U is (m, k), V is (n, k) with k = min(m, n), both with
    orthonormal columns; s is descending and non-negative.  Raises on
    non-finite input.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_finite(M)
    m, n = M.shape
    if m < n:
        V, s, U = svd(M.T)
        return U, s, V

    if m > _QR_REDUCE_MIN and m > _QR_REDUCE_RATIO * n:
        # library QR reduction of the tall factor; rank decisions stay with Jacobi
        Q, R = np.linalg.qr(M)
        Ur, s, V = svd(R)
        return Q @ Ur, s, V

    B, V = _jacobi_columns(M)
    norms = np.linalg.norm(B, axis=0)
    order = np.argsort(-norms, kind="stable")
    s = norms[order]
    B = B[:, order]
    V = V[:, order]

    sigma1 = s[0] if s.size else 0.0
    tiny = max(sigma1 * _EPS * max(m, n) * 8.0, 0.0)
    U = np.zeros((m, n))
    degenerate = []
    for i in range(n):
        if s[i] > tiny:
            u = B[:, i] / s[i]
            # re-orthogonalize against earlier columns for clean orthonormality
            for j in range(i):
                u = u - (U[:, j] @ u) * U[:, j]
            nu = np.linalg.norm(u)
            if nu > 0.5:
                U[:, i] = u / nu
            else:
                degenerate.append(i)
        else:
            degenerate.append(i)
    if degenerate:
        keep = [i for i in range(n) if i not in degenerate]
        filled = _complete_orthonormal(U[:, keep] if keep else np.zeros((m, 0)), m)
        for idx, i in enumerate(degenerate):
            U[:, i] = filled[:, idx]
    return U, s, V


def _decide(s, tol_rel, tol_abs):
    sigma1 = float(s[0]) if s.size else 0.0
    threshold = tol_rel * sigma1 + tol_abs
    rank = int(np.sum(s > threshold))
    if 0 < rank < s.size:
        gap = float(s[rank] / s[rank - 1])
    else:
        gap = 0.0
    return RankDecision(
        rank=rank,
        singular_values=tuple(float(v) for v in s),
        tol_rel=float(tol_rel),
        tol_abs=float(tol_abs),
        threshold_used=float(threshold),
        gap_ratio=gap,
    )


def numerical_rank(M, tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS):
    """Rank of M under the threshold sigma_i > tol_rel * sigma_1 + tol_abs."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_finite(M)
    _, s, _ = svd(M)
    return _decide(s, tol_rel, tol_abs)


def rank_from_singular_values(s, tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS):
    """RankDecision from an already-computed descending singular value list."""
    s = np.asarray(s, dtype=float)
    return _decide(s, tol_rel, tol_abs)


def _canonical_signs(B):
    """Flip each column so its largest-magnitude entry is positive (deterministic)."""
    B = B.copy()
    for i in range(B.shape[1]):
        col = B[:, i]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0.0:
            B[:, i] = -col
    return B


def right_null_space(M, tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS):
    """Orthonormal basis (columns) of {v : M v ~ 0}; shape (n, n - rank)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_finite(M)
    m, n = M.shape
    U, s, V = svd(M)
    rank = _decide(s, tol_rel, tol_abs).rank
    basis = [V[:, i] for i in range(s.size) if i >= rank]
    if n > m:
        extra = _complete_orthonormal(V, n)
        basis.extend(extra[:, i] for i in range(extra.shape[1]))
    if not basis:
        return np.zeros((n, 0))
    return _canonical_signs(np.column_stack(basis))


def left_null_space(M, tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS):
    """Orthonormal basis (columns) of {alpha : alpha^T M ~ 0}; shape (m, m - rank)."""
    return right_null_space(np.asarray(M, dtype=float).T, tol_rel, tol_abs)


def _check_symmetric(H):
    H = np.atleast_2d(np.asarray(H, dtype=float))
    _check_finite(H)
    if H.shape[0] != H.shape[1]:
        raise InputError(f"expected a square symmetric matrix, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H))))
    if float(np.max(np.abs(H - H.T))) > 1e-10 * scale:
        raise InputError("matrix is not symmetric to 1e-10 relative")
    return H


def principal_submatrix_rank(H, subset, tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS):
    """Rank decision for the principal submatrix H[subset, subset].

    ``subset`` holds distinct 0-based indices.  An empty subset has rank 0.
    """
    H = _check_symmetric(H)
    p = H.shape[0]
    subset = [int(i) for i in subset]
    if len(set(subset)) != len(subset):
        raise InputError(f"subset indices must be distinct, got {subset}")
    for i in subset:
        if not 0 <= i < p:
            raise InputError(f"subset index {i} outside 0..{p - 1}")
    if not subset:
        return RankDecision(0, (), float(tol_rel), float(tol_abs), float(tol_abs), 0.0)
    sub = H[np.ix_(subset, subset)]
    return numerical_rank(sub, tol_rel, tol_abs)


def max_rank_subset(H, tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS, exhaustive_limit=12):
    """Largest index subset whose principal submatrix has full rank.

    A symmetric matrix of rank r always has a nonsingular r x r principal
    submatrix, so the search starts at r = numerical_rank(H).  For
    p <= exhaustive_limit the absence of any full-rank (r+1)-subset is
    verified exhaustively; larger problems fall back to a greedy
    augmentation heuristic whose result is evidence, not proof.  Ties are
    broken by the lexicographically smallest subset.
    """
    H = _check_symmetric(H)
    p = H.shape[0]
    target = numerical_rank(H, tol_rel, tol_abs).rank
    if target == 0:
        return SubsetRankResult(0, (), "exhaustive" if p <= exhaustive_limit else "greedy", True)

    if p <= exhaustive_limit:
        for k in range(target, 0, -1):
            for subset in combinations(range(p), k):
                if principal_submatrix_rank(H, subset, tol_rel, tol_abs).rank == k:
                    verified = True
                    if k < p:
                        # confirm no larger subset is full rank
                        for bigger in combinations(range(p), k + 1):
                            if principal_submatrix_rank(H, bigger, tol_rel, tol_abs).rank == k + 1:
                                verified = False
                                break
                    if verified:
                        return SubsetRankResult(k, tuple(subset), "exhaustive", True)
        return SubsetRankResult(0, (), "exhaustive", True)

    # greedy: repeatedly add the index that keeps the submatrix furthest from singular
    chosen = []
    remaining = list(range(p))
    while remaining and len(chosen) < target:
        best_idx = None
        best_sigma = -1.0
        for i in remaining:
            trial = sorted(chosen + [i])
            sub = H[np.ix_(trial, trial)]
            _, s, _ = svd(sub)
            smin = float(s[-1] / s[0]) if s[0] > 0 else 0.0
            if smin > best_sigma + 1e-15:
                best_sigma = smin
                best_idx = i
        trial = sorted(chosen + [best_idx])
        if principal_submatrix_rank(H, trial, tol_rel, tol_abs).rank < len(trial):
            break
        chosen = trial
        remaining.remove(best_idx)
    return SubsetRankResult(len(chosen), tuple(chosen), "greedy", False)
