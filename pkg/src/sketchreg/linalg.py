"""Dense linear-algebra kernels.

Everything here works on C-ordered float64 :class:`numpy.ndarray` objects,
which play the role of the dense matrix container throughout the package.
QR goes through LAPACK Householder routines; the SVD uses LAPACK's
preconditioned one-sided Jacobi driver (``dgejsv``), which keeps high
relative accuracy on the small singular values that matter for condition
numbers in the 1e6 range.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import IllConditioned, NoConvergence, RankDeficient

RANK_TOL = 1e-12


class QrFactors(NamedTuple):
    q: np.ndarray
    r: np.ndarray


class SvdFactors(NamedTuple):
    u: np.ndarray | None
    sigma: np.ndarray
    v: np.ndarray | None


def as_dense(a, name: str = "a") -> np.ndarray:
    """Return ``a`` as a finite, C-ordered float64 array (1-D input becomes a column)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} has non-finite entries")
    return a


def _fix_signs(q, r):
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d, r * d[:, None]


def _rank_check(r, tol):
    diag = np.abs(np.diag(r))
    if diag.size and (diag.max() == 0.0 or diag.min() < tol * diag.max()):
        raise RankDeficient(
            f"triangular factor has min|R_ii|/max|R_ii| = "
            f"{diag.min() / max(diag.max(), np.finfo(float).tiny):.3e}"
        )


def householder_qr(a, check_rank: bool = True, tol: float = RANK_TOL) -> QrFactors:
    """Thin Householder QR with a nonnegative diagonal in R.

    Parameters
    ----------
    a : array_like, shape (m, n) with m >= n
    check_rank : bool
        Raise :class:`RankDeficient` if ``min |R_ii| < tol * max |R_ii|``.
    """
    a = as_dense(a)
    m, n = a.shape
    if m < n:
        raise ValueError("householder_qr needs rows >= cols")
    q, r = sla.qr(a, mode="economic", check_finite=False)
    q, r = _fix_signs(q, r)
    if check_rank:
        _rank_check(r, tol)
    return QrFactors(np.ascontiguousarray(q), r)


def triangular_factor(a, check_rank: bool = True, tol: float = RANK_TOL) -> np.ndarray:
    """R factor only (no Q formed), nonnegative diagonal."""
    a = as_dense(a)
    if a.shape[0] < a.shape[1]:
        raise ValueError("triangular_factor needs rows >= cols")
    r = sla.qr(a, mode="r", check_finite=False)[0][: a.shape[1]]
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    r = r * d[:, None]
    if check_rank:
        _rank_check(r, tol)
    return r


def jacobi_svd(a, compute_uv: bool = True, tol: float = RANK_TOL) -> SvdFactors:
    """Thin SVD truncated to numerical rank.

    Singular values at or below ``tol * sigma[0]`` are dropped together with
    their vectors.  Wide inputs are transposed internally.

    Raises
    ------
    NoConvergence
        If the Jacobi sweeps do not converge.
    """
    a = as_dense(a)
    m, n = a.shape
    if m < n:
        f = jacobi_svd(a.T, compute_uv=compute_uv, tol=tol)
        return SvdFactors(f.v, f.sigma, f.u)
    if n == 0:
        return SvdFactors(np.zeros((m, 0)), np.zeros(0), np.zeros((0, 0)))
    job = 0 if compute_uv else 3
    sva, u, v, work, _, info = lapack.dgejsv(a, joba=1, jobu=job, jobv=job)
    if info > 0:
        raise NoConvergence(f"dgejsv did not converge (info={info})")
    if info < 0:
        raise ValueError(f"dgejsv: illegal argument {-info}")
    # dgejsv may return scaled values to avoid overflow
    sigma = sva * (work[0] / work[1])
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    r = int(np.sum(sigma > tol * sigma[0])) if sigma[0] > 0 else 0
    sigma = sigma[:r]
    if not compute_uv:
        return SvdFactors(None, sigma, None)
    u = np.ascontiguousarray(u[:, order[:r]])
    v = np.ascontiguousarray(v[:, order[:r]])
    return SvdFactors(u, sigma, v)


def singular_values(a) -> np.ndarray:
    """All singular values (no truncation), nonincreasing."""
    return jacobi_svd(a, compute_uv=False, tol=0.0).sigma


def min_length_solve(a, b) -> np.ndarray:
    """Minimum-length least-squares solution ``A^+ b`` via the SVD."""
    a = as_dense(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise ValueError("dimension mismatch between a and b")
    u, sigma, v = jacobi_svd(a)
    return v @ ((u.T @ b) / (sigma if b.ndim == 1 else sigma[:, None]))


def lstsq_qr(a, b) -> np.ndarray:
    """Least squares through Householder QR (full column rank required)."""
    q, r = householder_qr(a)
    return sla.solve_triangular(r, q.T @ np.asarray(b, dtype=np.float64), check_finite=False)


def normal_eq_solve(a, b) -> np.ndarray:
    """Least squares via Cholesky on ``A^T A``.

    Cheapest of the direct solvers and the least accurate: the error grows
    with ``cond2(A)**2``.

    Raises
    ------
    IllConditioned
        If ``A^T A`` is not numerically positive definite.
    """
    a = as_dense(a)
    b = np.asarray(b, dtype=np.float64)
    g = a.T @ a
    try:
        c = sla.cho_factor(g, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IllConditioned(f"Cholesky of A^T A failed: {exc}") from exc
    if not np.all(np.isfinite(c[0])) or np.any(np.diag(c[0]) <= 0):
        raise IllConditioned("Cholesky of A^T A produced a non-positive pivot")
    return sla.cho_solve(c, a.T @ b, check_finite=False)


def cond2(a) -> float:
    """Spectral condition number ``sigma_max / sigma_min``.

    Returns ``inf`` when ``a`` is rank deficient at the 1e-12 relative
    threshold.  Tall inputs are first reduced to their R factor, which has
    the same singular values.
    """
    a = as_dense(a)
    m, n = a.shape
    if m < n:
        a = a.T
        m, n = n, m
    if m > 2 * n:
        a = sla.qr(a, mode="r", check_finite=False)[0][:n]
    sigma = singular_values(a)
    if sigma.size < n or sigma[-1] <= RANK_TOL * sigma[0]:
        return float("inf")
    return float(sigma[0] / sigma[-1])


def _dual_exponent(p: float) -> float:
    if p == 1:
        return np.inf
    return p / (p - 1.0)


def kappa_bar_p(a, p: float, probes: int = 64, seed=0):
    """Elementwise-norm conditioning estimate for the l_p norm.

    Parameters
    ----------
    a : array_like, shape (m, n)
    p : float
        Norm order, ``p >= 1``.
    probes : int
        Number of random probe directions on top of the deterministic ones
        (coordinate axes and the smallest right singular vector).
    seed : int or SeedSpec

    Returns
    -------
    alpha : float
        ``|A|_p``, the entrywise l_p norm.
    beta_lower : float
        ``max_z ||z||_q / ||A z||_p`` over the probes.  Any feasible beta in
        the conditioning definition is at least this large, so
        ``alpha * beta_lower`` is a lower bound on kappa-bar.
    is_estimate : bool
        Always True; the product is a certified lower bound, not the value.
    """
    from .randstream import as_seedspec, draw

    if p < 1:
        raise ValueError("p must be >= 1")
    a = as_dense(a)
    n = a.shape[1]
    q = _dual_exponent(p)
    alpha = float(np.sum(np.abs(a) ** p) ** (1.0 / p)) if p != 1 else float(np.abs(a).sum())

    z = [np.eye(n)]
    if probes > 0:
        z.append(draw(as_seedspec(seed), "normal", (n, probes)))
    sig = jacobi_svd(a)
    if sig.v is not None and sig.v.shape[1] == n:
        z.append(sig.v[:, -1:])
    z = np.hstack(z)
    az = np.linalg.norm(a @ z, ord=p, axis=0)
    zq = np.linalg.norm(z, ord=q, axis=0)
    with np.errstate(divide="ignore"):
        ratio = np.where(az > 0, zq / az, np.inf)
    return alpha, float(ratio.max()), True


def require_full_rank(r, tol: float = RANK_TOL) -> np.ndarray:
    """Raise :class:`RankDeficient` unless the square factor ``r`` has numerical full rank.

    Uses singular values rather than the diagonal of ``r``; a sketch that
    collapsed rows can keep a healthy-looking diagonal.  Returns the singular
    values.
    """
    sigma = singular_values(r)
    n = np.asarray(r).shape[1]
    if sigma.size < n or sigma[0] == 0.0 or sigma[-1] <= tol * sigma[0]:
        ratio = sigma[-1] / sigma[0] if sigma.size and sigma[0] > 0 else 0.0
        raise RankDeficient(f"factor is numerically rank deficient (sigma_min/sigma_max = {ratio:.3e})")
    return sigma
