"""Right preconditioners built from sketches.

A preconditioner ``N`` turns ``min ||A x - b||`` into ``min ||A N y - b||``
with ``x = N y``.  QR-type preconditioners keep the triangular factor and
apply ``N = R^{-1}`` by back substitution; the SVD-type one used by LSRN
stores ``N = V Sigma^{-1}`` explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import passio
from .errors import RankDeficient
from .linalg import as_dense, cond2, jacobi_svd, require_full_rank, triangular_factor
from .randstream import as_seedspec, draw
from .sketch import SketchOperator

DEFAULT_DELTA = 0.01


@dataclass
class Preconditioner:
    """Right preconditioner ``N`` with an optional predicted singular-value interval of ``A N``."""

    kind: str
    r: np.ndarray | None = None
    n_explicit: np.ndarray | None = None
    source: dict = field(default_factory=dict)
    predicted_interval: tuple[float, float] | None = None

    @property
    def n(self) -> int:
        return (self.r if self.r is not None else self.n_explicit).shape[0]

    @property
    def n_matrix(self) -> np.ndarray:
        if self.n_explicit is not None:
            return self.n_explicit
        return sla.solve_triangular(self.r, np.eye(self.n), check_finite=False)

    def apply(self, y) -> np.ndarray:
        """``N @ y``."""
        if self.r is not None:
            return sla.solve_triangular(self.r, y, check_finite=False)
        return self.n_explicit @ y

    def apply_t(self, z) -> np.ndarray:
        """``N.T @ z``."""
        if self.r is not None:
            return sla.solve_triangular(self.r, z, trans="T", check_finite=False)
        return self.n_explicit.T @ z

    def right_apply(self, a) -> np.ndarray:
        """``A @ N`` for a row block ``A``."""
        if self.r is not None:
            return sla.solve_triangular(self.r, np.asarray(a).T, trans="T", check_finite=False).T
        return np.asarray(a) @ self.n_explicit


def identity_precond(n: int) -> Preconditioner:
    return Preconditioner("identity", n_explicit=np.eye(n), source={"kind": "identity"})


def qr_precond(sketch_of_a, source: dict | None = None) -> Preconditioner:
    """``N = R^{-1}`` from the QR factorization of a sketch ``Phi A``.

    Raises
    ------
    RankDeficient
        The sketch lost rank; use a larger embedding dimension.
    """
    sa = as_dense(sketch_of_a)
    if sa.shape[0] < sa.shape[1]:
        raise RankDeficient(f"sketch has {sa.shape[0]} rows for {sa.shape[1]} columns; increase s")
    r = triangular_factor(sa, check_rank=False)
    try:
        require_full_rank(r)
    except RankDeficient as exc:
        raise RankDeficient(f"{exc}; increase the embedding dimension") from None
    return Preconditioner("qr", r=r, source=dict(source or {}))


def sketch_precond(a, variant: str, s: int, seed=None, ledger=None, **opts) -> Preconditioner:
    """Sketch ``A`` with the given variant (one pass) and return the QR-type preconditioner."""
    stream = passio.as_stream(a, ledger=ledger)
    op = SketchOperator(variant, s, stream.rows, seed, **opts)
    p = qr_precond(op.apply(stream), source=op.describe())
    if op.variant == "gaussian":
        p.predicted_interval = gaussian_qr_interval(stream.cols, s)
    return p


def gaussian_tail_t(delta: float = DEFAULT_DELTA) -> float:
    """``t`` with ``2 exp(-t**2/2) = delta``."""
    return math.sqrt(2.0 * math.log(2.0 / delta))


def lsrn_interval(n: int, s: int, delta: float = DEFAULT_DELTA) -> tuple[float, float]:
    """Interval expected to contain the singular values of ``A N`` for LSRN.

    ``[1/(sqrt(s)+sqrt(n)+t), 1/(sqrt(s)-sqrt(n)-t)]``; the upper end is
    ``inf`` when ``s`` is too small for the bound to say anything.
    """
    t = gaussian_tail_t(delta)
    lo = 1.0 / (math.sqrt(s) + math.sqrt(n) + t)
    den = math.sqrt(s) - math.sqrt(n) - t
    return lo, (1.0 / den if den > 0 else math.inf)


def lsrn_kappa_bound(n: int, s: int, alpha: float) -> float:
    """``(1 + alpha + sqrt(n/s)) / (1 - alpha - sqrt(n/s))``, ``inf`` if the denominator is not positive."""
    r = math.sqrt(n / s)
    den = 1.0 - alpha - r
    return (1.0 + alpha + r) / den if den > 0 else math.inf


def lsrn_alpha(s: int, delta: float = DEFAULT_DELTA) -> float:
    """Deviation ``alpha = t / sqrt(s)`` matching the tail bound at failure probability ``delta``."""
    return gaussian_tail_t(delta) / math.sqrt(s)


def lsrn_from_sketch(at, s: int, delta: float = DEFAULT_DELTA, source: dict | None = None) -> Preconditioner:
    """``N = V Sigma^{-1}`` from the SVD of an unscaled Gaussian sketch ``G A`` with ``s`` rows."""
    n = at.shape[1]
    f = jacobi_svd(at)
    if f.sigma.size < n:
        raise RankDeficient(f"Gaussian sketch has rank {f.sigma.size} < {n}")
    return Preconditioner("svd", n_explicit=np.ascontiguousarray(f.v / f.sigma), source=dict(source or {}),
                          predicted_interval=lsrn_interval(n, s, delta))


def lsrn_sketch_size(n: int, gamma: float) -> int:
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    return int(math.ceil(gamma * n))


def lsrn_precond(a, gamma: float = 2.0, seed=None, delta: float = DEFAULT_DELTA, ledger=None) -> Preconditioner:
    """SVD-type preconditioner from an unscaled Gaussian sketch.

    ``s = ceil(gamma n)``, ``A_tilde = G A`` with i.i.d. standard normal
    ``G`` (no ``s**-0.5`` factor), and ``N = V Sigma^{-1}`` from the SVD of
    ``A_tilde``.  The predicted interval for the singular values of ``A N``
    is :func:`lsrn_interval`.
    """
    stream = passio.as_stream(a, ledger=ledger)
    m, n = stream.shape
    s = lsrn_sketch_size(n, gamma)
    op = SketchOperator("gaussian", s, m, seed)
    at = op.apply(stream, scaled=False)
    return lsrn_from_sketch(at, s, delta, op.describe() | {"unscaled": True, "gamma": gamma})


def gaussian_qr_interval(n: int, s: int, delta: float = DEFAULT_DELTA) -> tuple[float, float]:
    """Predicted singular-value interval of ``A R^{-1}`` for a scaled Gaussian sketch ``s**-0.5 G A``."""
    lo, hi = lsrn_interval(n, s, delta)
    return lo * math.sqrt(s), hi * math.sqrt(s)


def sampled_precond(a, lev, s: float, seed=None, ledger=None) -> Preconditioner:
    """QR-type preconditioner from Bernoulli leverage-sampled, rescaled rows.

    Row ``i`` is kept with probability ``q_i = min(1, s p_i)`` and scaled by
    ``1/sqrt(q_i)``.
    """
    stream = passio.as_stream(a, ledger=ledger)
    q = np.minimum(1.0, s * lev.probs)
    u = draw(as_seedspec(seed).spawn(0), "uniform", stream.rows)
    keep = np.flatnonzero(u < q)
    rows = passio.concat_tiles(
        stream,
        lambda t, r0, tile: tile[keep[(keep >= r0) & (keep < r0 + tile.shape[0])] - r0],
        empty=np.zeros((0, stream.cols)),
    )
    rows = rows / np.sqrt(q[keep])[:, None]
    return qr_precond(rows, source={"kind": "sampled", "s": s, "kept": int(keep.size)})


def precond_quality(a, p: Preconditioner) -> float:
    """``cond2(A N)`` for a matrix small enough to form ``A N``."""
    a = passio.as_stream(a).to_array() if not isinstance(a, np.ndarray) else a
    return cond2(p.right_apply(a))
