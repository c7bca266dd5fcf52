"""Statistical leverage scores: exact, fast approximate, and quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import passio
from .errors import RankDeficient
from .linalg import householder_qr, jacobi_svd, require_full_rank, triangular_factor
from .randstream import as_seedspec, draw
from .sketch import SketchOperator

# stream index for the second-stage Gaussian projection
_PI2_STREAM = (1 << 63) + 11
_RETRY_STREAM = (1 << 63) + 13
LEVERAGE_ONE_TOL = 1e-8


@dataclass
class LeverageEstimate:
    """Per-row leverage scores.

    ``beta`` is the guaranteed misestimation factor (1 for exact scores) and
    ``method`` records how the scores were obtained.
    """

    scores: np.ndarray
    beta: float = 1.0
    method: dict = field(default_factory=lambda: {"kind": "exact"})

    @property
    def probs(self) -> np.ndarray:
        total = self.scores.sum()
        return self.scores / total if total > 0 else np.full_like(self.scores, 1.0 / self.scores.size)

    @property
    def coherence(self) -> float:
        return float(self.scores.max())


def exact_leverage(a) -> LeverageEstimate:
    """Squared row norms of an orthonormal basis of ``range(A)``.

    Householder QR is used for full-rank input and the truncated SVD
    otherwise.
    """
    a = passio.as_stream(a).to_array() if not isinstance(a, np.ndarray) else a
    try:
        q = householder_qr(a).q
    except RankDeficient:
        q = jacobi_svd(a).u
    return LeverageEstimate(np.einsum("ij,ij->i", q, q), 1.0, {"kind": "exact"})


def default_proj1(m: int, n: int, seed=None) -> SketchOperator:
    """CountSketch with ``c1 = n**2/4``; Gaussian with ``c1 = 10 n`` when ``n**2/4 <= 10 n``.

    Small ``n`` gets the Gaussian projection because a CountSketch with so
    few rows loses rank on coherent inputs.
    """
    c_cw = int(math.ceil(n * n / 4))
    if c_cw <= 10 * n:
        return SketchOperator("gaussian", min(10 * n, max(m, n)), m, seed)
    return SketchOperator("countsketch", c_cw, m, seed)


def default_r2(m: int, gamma: float = 0.5) -> int:
    """JL dimension ``ceil(8 ln(m) / gamma**2)`` for the second projection."""
    return int(math.ceil(8.0 * math.log(max(m, 2)) / gamma**2))


def approx_leverage(a, proj1: SketchOperator | None = None, r2: int | str | None = "auto",
                    gamma: float = 0.5, seed=None, ledger=None, max_retries: int = 3) -> LeverageEstimate:
    """Two-pass approximation of leverage scores.

    Pass 1 sketches ``Pi_1 A`` and takes its R factor.  Pass 2 computes
    ``|| a_i R^{-1} Pi_2 ||^2`` for each row, where ``Pi_2`` is an
    ``n x r2`` Gaussian scaled by ``r2**-0.5``.  When ``r2 >= n`` the second
    projection cannot save work and the row norms of ``A R^{-1}`` are used
    directly.

    Parameters
    ----------
    a : ndarray or RowBlockStream
    proj1 : SketchOperator, optional
        Defaults to :func:`default_proj1`.  Only the default is retried: if
        its sketch loses rank, it is redrawn with twice the rows on a fresh
        stream (one more pass each time), up to ``max_retries`` times.
    r2 : int, "auto" or None
        ``"auto"``/None uses :func:`default_r2` with the given ``gamma``.
    gamma : float
        JL distortion target for ``Pi_2``; ``beta = (1 - gamma)/(1 + gamma)``.

    Raises
    ------
    RankDeficient
        When ``Pi_1 A`` loses rank, typically because ``c1`` is too small.
        A given ``proj1`` is never retried.
    """
    stream = passio.as_stream(a, ledger=ledger)
    m, n = stream.shape
    seed = as_seedspec(seed)
    r2 = default_r2(m, gamma) if r2 in (None, "auto") else int(r2)
    retries = 0
    if proj1 is None:
        proj1 = default_proj1(m, n, seed)
        while True:
            r = triangular_factor(proj1.apply(stream), check_rank=False)
            try:
                require_full_rank(r)
                break
            except RankDeficient:
                # hashed coherent rows can share a bucket; re-sketch larger on a fresh stream
                if retries == max_retries:
                    raise
                retries += 1
                proj1 = SketchOperator(proj1.variant, 2 * proj1.s, m, seed.spawn(_RETRY_STREAM + retries))
    else:
        r = triangular_factor(proj1.apply(stream), check_rank=False)
        require_full_rank(r)

    if r2 >= n:
        right = np.eye(n)
        used_r2 = n
    else:
        right = draw(seed.spawn(_PI2_STREAM), "normal", (n, r2)) / math.sqrt(r2)
        used_r2 = r2
    # R^{-1} Pi_2, formed once (n x r2)
    w = sla.solve_triangular(r, right, check_finite=False)

    def rownorms(t, r0, tile):
        z = tile @ w
        return np.einsum("ij,ij->i", z, z)

    scores = passio.concat_tiles(stream, rownorms, empty=np.zeros(0), flops=2.0 * m * n * used_r2)
    np.clip(scores, 0.0, 1.0, out=scores)
    beta = 1.0 if used_r2 == n else (1 - gamma) / (1 + gamma)
    method = {"kind": "approx", "proj1": proj1.variant, "c1": proj1.s, "r2": used_r2, "retries": retries}
    return LeverageEstimate(scores, beta, method)


def _normalize(x):
    x = np.asarray(x, dtype=np.float64)
    return x / x.sum()


def leverage_quality(exact: LeverageEstimate, approx: LeverageEstimate) -> dict:
    """Error metrics of an estimate against exact scores.

    Returns
    -------
    dict with keys
        ``rel_l2``: ``||p_hat - p*||_2 / ||p*||_2`` on normalized scores;
        ``kl``: ``sum_i p*_i ln(p*_i / p_hat_i)`` over rows with ``p*_i > 0``;
        ``alpha_L, beta_L``: max and min of ``p_hat_i / p*_i`` over rows whose
        exact leverage is 1; ``alpha_S, beta_S``: the same over the rest.
        Ratios over an empty set are NaN.
    """
    s_exact = np.asarray(exact.scores, dtype=np.float64)
    s_hat = np.asarray(approx.scores, dtype=np.float64)
    if s_exact.shape != s_hat.shape:
        raise ValueError("estimates cover different numbers of rows")
    p, q = _normalize(s_exact), _normalize(s_hat)
    rel = float(np.linalg.norm(q - p) / np.linalg.norm(p))
    pos = p > 0
    with np.errstate(divide="ignore"):
        kl = float(np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos]))))
    ratio = np.full_like(p, np.nan)
    ratio[pos] = q[pos] / p[pos]
    big = s_exact >= 1.0 - LEVERAGE_ONE_TOL
    small = pos & ~big

    def ext(mask, fn):
        return float(fn(ratio[mask])) if mask.any() else float("nan")

    return {"rel_l2": rel, "kl": kl,
            "alpha_L": ext(big, np.max), "beta_L": ext(big, np.min),
            "alpha_S": ext(small, np.max), "beta_S": ext(small, np.min)}
