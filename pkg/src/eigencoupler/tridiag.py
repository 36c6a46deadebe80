"""Symmetric tridiagonal eigensolver: Sturm-sequence bisection for the
smallest eigenvalues, inverse iteration for the eigenvectors.

Shared numerical kernel for the two spectral discretization routes. The
bisection uses the classic LAPACK-style pivoted recurrence for the eigenvalue
count function; eigenvalues are refined to a Rayleigh quotient of the
converged inverse-iteration vector, which is far more accurate than the
bisection bracket alone.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import EigenSolveError

__all__ = ["eigensolve_tridiagonal", "tridiagonal_matvec"]

_BISECT_REL_TOL = 1e-12       # times the spectral radius estimate
_RESIDUAL_TOL = 1e-11         # times ||T||_inf, inverse-iteration convergence
_CLUSTER_GAP = 1e-8           # reorthogonalize below this eigenvalue gap
_SHIFT_JITTER = 1e-10
_MAX_INVERSE_ITER = 50


def tridiagonal_matvec(diag, offdiag, v):
    """T @ v for symmetric tridiagonal T (supports a batch of columns)."""
    d = np.asarray(diag)
    e = np.asarray(offdiag)
    v = np.asarray(v)
    out = d.reshape(-1, *([1] * (v.ndim - 1))) * v if v.ndim > 1 else d * v
    if len(e):
        out[:-1] += e.reshape(-1, *([1] * (v.ndim - 1))) * v[1:] if v.ndim > 1 else e * v[1:]
        out[1:] += e.reshape(-1, *([1] * (v.ndim - 1))) * v[:-1] if v.ndim > 1 else e * v[:-1]
    return out


def _sturm_counts(diag, offdiag2, shifts, pivmin):
    """Number of eigenvalues of T strictly below each shift."""
    shifts = np.atleast_1d(shifts)
    q = diag[0] - shifts
    small = np.abs(q) < pivmin
    q[small] = -pivmin
    counts = (q < 0).astype(np.int64)
    for i in range(1, len(diag)):
        q = diag[i] - shifts - offdiag2[i - 1] / q
        small = np.abs(q) < pivmin
        q[small] = -pivmin
        counts += q < 0
    return counts


def _bisect_eigenvalues(diag, offdiag, k, tol):
    """Brackets [lo_j, hi_j] of width <= tol around the k smallest eigenvalues."""
    n = len(diag)
    pad = np.concatenate((np.abs(offdiag), [0.0])) if len(offdiag) else np.zeros(1)
    radius = pad + np.concatenate(([0.0], pad[:-1]))  # Gershgorin row radii
    gl = float(np.min(diag - radius))
    gu = float(np.max(diag + radius))
    offdiag2 = offdiag.astype(float) ** 2 if len(offdiag) else np.zeros(0)
    pivmin = max(np.max(offdiag2, initial=0.0), 1.0) * np.finfo(float).tiny * n

    lo = np.full(k, gl)
    hi = np.full(k, gu)
    targets = np.arange(1, k + 1)  # want count(hi) >= j, count(lo) < j
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        counts = _sturm_counts(diag, offdiag2, mid, pivmin)
        below = counts >= targets
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
    return lo, hi


def _inverse_iteration(diag, offdiag, shift, prev_vectors, rng, norm_t):
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = offdiag
    ab[1] = diag - shift
    ab[2, :-1] = offdiag
    v = rng.standard_normal(n)
    for q in prev_vectors:
        v -= (q @ v) * q
    v /= np.linalg.norm(v)
    residual = np.inf
    for it in range(_MAX_INVERSE_ITER):
        try:
            w = solve_banded((1, 1), ab, v)
        except np.linalg.LinAlgError:
            ab[1] += _SHIFT_JITTER * max(1.0, norm_t)
            continue
        for q in prev_vectors:
            w -= (q @ w) * q
        nw = np.linalg.norm(w)
        if nw == 0.0:
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        tv = tridiagonal_matvec(diag, offdiag, v)
        rho = float(v @ tv)
        residual = float(np.max(np.abs(tv - rho * v)))
        if it >= 1 and residual <= _RESIDUAL_TOL * norm_t:
            return v, rho, residual
    raise EigenSolveError(
        f"inverse iteration did not converge after {_MAX_INVERSE_ITER} iterations "
        f"(residual {residual:.3e}, tolerance {_RESIDUAL_TOL * norm_t:.3e})")


def eigensolve_tridiagonal(diag, offdiag, k_max):
    """The k_max smallest eigenpairs of the symmetric tridiagonal matrix with
    the given diagonal and off-diagonal.

    Eigenvalues are located by Sturm-sequence bisection to absolute tolerance
    1e-12 times the spectral radius, then refined by the Rayleigh quotient of
    the inverse-iteration eigenvector. Eigenvectors within a cluster (gap
    below 1e-8) are reorthogonalized against the previously found ones.

    Returns:
        (values, vectors): values ascending, shape (k_max,); vectors with unit
        2-norm in the columns of an (n, k_max) array.
    """
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    n = len(diag)
    if len(offdiag) != max(n - 1, 0):
        raise ValueError("offdiag must have length n-1")
    if not 1 <= k_max <= n:
        raise ValueError("k_max must be in [1, n]")

    norm_t = float(np.max(np.abs(diag)) + 2 * np.max(np.abs(offdiag), initial=0.0))
    if norm_t == 0.0:
        return np.zeros(k_max), np.eye(n)[:, :k_max]
    lo, hi = _bisect_eigenvalues(diag, offdiag, k_max, _BISECT_REL_TOL * norm_t)
    approx = 0.5 * (lo + hi)

    values = np.empty(k_max)
    vectors = np.empty((n, k_max))
    rng = np.random.default_rng(0xEC0)
    for k in range(k_max):
        cluster = [vectors[:, j] for j in range(k) if approx[k] - approx[j] < _CLUSTER_GAP]
        shift = approx[k] + _SHIFT_JITTER
        v, rho, _ = _inverse_iteration(diag, offdiag, shift, cluster, rng, norm_t)
        values[k] = rho
        vectors[:, k] = v
    order = np.argsort(values, kind="stable")
    return values[order], vectors[:, order]
