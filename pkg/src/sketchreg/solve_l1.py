"""Low-precision l1 regression by conditioning and row sampling.

Pipeline (two passes over ``A``):

1. Sketch ``A`` with an l1 embedding and take ``N = R^{-1}`` from the QR
   of the sketch, so that ``A N`` is well conditioned in the l1 sense.
2. In a single pass over ``[A b]``, compute the l1 row norms of ``A N`` and
   draw any number of independent Bernoulli row samples with
   ``q_i = min(1, s ||a_i N||_1 / sum_j ||a_j N||_1)``, rows rescaled by
   ``1/q_i``.  Each sample is solved exactly in homogeneous form.

Drawing a sample needs the total ``sum_j ||a_j N||_1``, which is only known
at the end of the pass.  Rows are therefore screened against the running
prefix of that sum (a lower bound of the total): a row that would be kept
under the total is always kept under the prefix, so the final exact filter
loses nothing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import passio
from .errors import EpsOutOfRange, RankDeficient
from .l1core import L1Subproblem, ipm_l1
from .linalg import as_dense, kappa_bar_p
from .matrixgen import ProblemInstance
from .passio import CostLedger
from .precond import Preconditioner, qr_precond
from .randstream import as_seedspec, draw
from .sketch import SketchOperator, embedding_dim_default
from .solve_l2 import SolveReport

_FAST_STREAM = (1 << 63) + 23


@dataclass
class SamplingDistribution:
    """Bernoulli inclusion probabilities and the row norms they came from."""

    probs: np.ndarray
    base_norms: np.ndarray
    kappa_bar_used: float = float("nan")


@dataclass
class L1Config:
    variant: str = "sparse_cauchy"
    s_cond: int | str = "auto"
    s: int | str = "auto"
    fast: bool = False
    normalization: str = "theorem"
    kappa1: float | str | None = None
    eps: float = 0.1
    delta: float = 0.1
    kappa_bar: float | None = None
    ipm_tol: float = 1e-8
    evaluate: bool = True


def sample_size_l1(kappa_bar: float, n: int, eps: float, delta: float, p: float = 1) -> int:
    """``ceil(16 (2^p + 2) kappa_bar^p (n ln(12/eps) + ln(2/delta)) / (p^2 eps^2))``.

    Raises
    ------
    EpsOutOfRange
        Unless ``0 < eps < 1/7``.
    """
    if not 0 < eps < 1.0 / 7.0:
        raise EpsOutOfRange(f"eps={eps} outside (0, 1/7)")
    if kappa_bar <= 0 or n < 1 or not 0 < delta < 1 or p <= 0:
        raise ValueError("kappa_bar, n, p must be positive and delta in (0, 1)")
    val = 16 * (2**p + 2) * kappa_bar**p * (n * math.log(12 / eps) + math.log(2 / delta)) / (p * p * eps * eps)
    return int(math.ceil(val))


def default_sample_size(n: int, cfg: L1Config) -> tuple[int, int]:
    """``(s_used, s_theory)``: the theory value at ``kappa_bar`` and its cap at ``100 n``.

    Without a supplied ``kappa_bar`` the theory value is evaluated at
    ``kappa_bar = n``, the value attained by an Auerbach basis, so it is a
    lower bound on what the theory asks for.
    """
    kb = cfg.kappa_bar if cfg.kappa_bar is not None else float(n)
    eps = min(cfg.eps, 1 / 7 - 1e-12)
    theory = sample_size_l1(kb, n, eps, cfg.delta, 1)
    return min(theory, 100 * n), theory


def condition_l1(a, variant: str = "sparse_cauchy", s: int | str | None = "auto", seed=None,
                 ledger: CostLedger | None = None) -> Preconditioner:
    """One-pass QR-type l1 conditioning: ``N = R^{-1}`` from ``Phi A``."""
    stream = passio.as_stream(a, ledger=ledger)
    m, n = stream.shape
    if s in (None, "auto"):
        s = embedding_dim_default(variant, n)
    op = SketchOperator(variant, int(s), m, seed)
    return qr_precond(op.apply(stream), op.describe())


def _row_norm_map(precond: Preconditioner, n: int, fast: bool, m: int, seed):
    if fast:
        r = int(math.ceil(8 * math.log(max(m, 2))))
        pi = draw(as_seedspec(seed).spawn(_FAST_STREAM), "normal", (n, r)) / math.sqrt(r)
        w = precond.apply(pi)

        def norms(tile):
            return np.linalg.norm(tile @ w, axis=1)
    else:
        nmat = precond.n_matrix

        def norms(tile):
            return np.abs(tile @ nmat).sum(axis=1)

    return norms


def _mapper_kappa(a, precond, kappa1):
    if isinstance(kappa1, (int, float)):
        return float(kappa1)
    mat = as_dense(passio.as_stream(a).to_array() if not isinstance(a, np.ndarray) else a)
    if kappa1 in (None, "basis"):
        mat = precond.right_apply(mat)
    alpha, beta, _ = kappa_bar_p(mat, 1, probes=64, seed=0)
    return alpha * beta


def _probs(norms, s, total, normalization, kappa, n):
    if normalization == "theorem":
        return np.minimum(1.0, s * norms / total) if total > 0 else np.zeros_like(norms)
    return np.minimum(1.0, s * norms / (kappa * math.sqrt(n)))


def l1_sampling_distribution(a, n_mat: Preconditioner, s: float, fast: bool = False,
                             normalization: str = "theorem", kappa1=None, seed=None,
                             ledger: CostLedger | None = None) -> SamplingDistribution:
    """Row-sampling probabilities from the l1 row norms of ``A N`` (one pass).

    Parameters
    ----------
    fast : bool
        Estimate the norms as ``||a_i N Pi||_2`` with an ``n x ceil(8 ln m)``
        Gaussian ``Pi``.  These are l2 estimates; they track the l1 norms up
        to a factor of at most ``sqrt(n)``.
    normalization : {"theorem", "mapper"}
        ``theorem``: ``q_i = min(1, s norm_i / sum_j norm_j)``.
        ``mapper``: ``q_i = min(1, s norm_i / (kappa1 sqrt(n)))``.
    kappa1 : float, "basis" or "a"
        Condition number for the mapper form, or which matrix to estimate it
        on (a probe lower bound of kappa-bar_1 for ``A N`` or for ``A``).
    """
    stream = passio.as_stream(a, ledger=ledger)
    m, n = stream.shape
    norms_fn = _row_norm_map(n_mat, n, fast, m, seed)
    norms = passio.concat_tiles(stream, lambda t, r0, tile: norms_fn(tile), empty=np.zeros(0))
    kappa = float("nan")
    if normalization == "mapper":
        kappa = _mapper_kappa(a, n_mat, kappa1)
    elif normalization != "theorem":
        raise ValueError("normalization must be 'theorem' or 'mapper'")
    probs = _probs(norms, s, float(norms.sum()), normalization, kappa, n)
    return SamplingDistribution(probs, norms, kappa)


def _problem(inst):
    if isinstance(inst, ProblemInstance):
        return inst.a, np.asarray(inst.b, dtype=np.float64).ravel(), inst.x_star, inst.f_star
    a, b = inst[0], np.asarray(inst[1], dtype=np.float64).ravel()
    return a, b, (inst[2] if len(inst) > 2 else None), (inst[3] if len(inst) > 3 else None)


def multi_sample_pass(a, b, precond: Preconditioner, s: float, n_queries: int, seed, fast=False,
                      normalization="theorem", kappa=float("nan"), ledger=None):
    """One pass over ``[A b]`` that draws ``n_queries`` independent Bernoulli samples.

    Returns a list of ``(rows, scale, sampled [A b])`` per query and the
    full :class:`SamplingDistribution`.
    """
    stream = passio.RowBlockStream((a, b), None, ledger)
    m, n1 = stream.shape
    n = n1 - 1
    seed = as_seedspec(seed)
    norms_fn = _row_norm_map(precond, n, fast, m, seed)
    qseeds = [seed.spawn(q) for q in range(n_queries)]

    def f(t, r0, tile):
        nr = norms_fn(tile[:, :n])
        us = np.stack([draw(qs.spawn(t), "uniform", tile.shape[0]) for qs in qseeds])
        return nr, us, tile

    prefix = 0.0
    all_norms = []
    cand = [[] for _ in range(n_queries)]
    for t, (nr, us, tile) in enumerate(passio.map_tiles(stream, f)):
        prefix += float(nr.sum())
        all_norms.append(nr)
        r0 = t * passio.TILE_ROWS
        for q in range(n_queries):
            if normalization == "theorem":
                keep = np.flatnonzero(us[q] * prefix < s * nr)
            else:
                keep = np.flatnonzero(us[q] < _probs(nr, s, prefix, normalization, kappa, n))
            if keep.size:
                cand[q].append((r0 + keep, nr[keep], us[q][keep], tile[keep]))
    stream.ledger.record_pass(2.0 * m * n * n)
    norms = np.concatenate(all_norms) if all_norms else np.zeros(0)
    total = float(norms.sum())
    dist = SamplingDistribution(_probs(norms, s, total, normalization, kappa, n), norms, kappa)
    out = []
    for q in range(n_queries):
        if not cand[q]:
            out.append((np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros((0, n1))))
            continue
        rows = np.concatenate([c[0] for c in cand[q]])
        nr = np.concatenate([c[1] for c in cand[q]])
        u = np.concatenate([c[2] for c in cand[q]])
        ab = np.vstack([c[3] for c in cand[q]])
        p = _probs(nr, s, total, normalization, kappa, n)
        keep = u < p
        out.append((rows[keep], 1.0 / p[keep], ab[keep] / p[keep][:, None]))
    return out, dist


def _objectives(a, b, xs, ledger):
    """``||A x - b||_1`` for every column of ``xs`` in one pass."""
    stream = passio.RowBlockStream((a, b), None, ledger)
    xe = np.vstack([xs, -np.ones((1, xs.shape[1]))])
    return passio.sum_tiles(stream, lambda t, r0, tile: np.abs(tile @ xe).sum(axis=0),
                            empty=np.zeros(xs.shape[1]), flops=2.0 * stream.rows * stream.cols * xs.shape[1])


def _condition_auto(a, cfg: L1Config, seed, ledger, k0: int = 0, s0: int | None = None,
                    max_retries: int = 3):
    """Condition; with ``s_cond="auto"`` a rank-deficient sketch is retried at twice the size.

    Hashing sketches drop rank when two high-leverage rows share a bucket.
    Each retry costs one more pass and uses a fresh stream.  Returns the
    preconditioner, the attempt index and the sketch size used.
    """
    if cfg.s_cond not in (None, "auto"):
        return condition_l1(a, cfg.variant, cfg.s_cond, seed, ledger), 0, int(cfg.s_cond)
    s = s0 or embedding_dim_default(cfg.variant, a.shape[1])
    for k in range(k0, k0 + max_retries + 1):
        try:
            return condition_l1(a, cfg.variant, s, seed.spawn(k) if k else seed, ledger), k, s
        except RankDeficient:
            if k == k0 + max_retries:
                raise
            s *= 2


def solve_l1_low_precision(inst, cfg: L1Config | None = None, n_queries: int = 1, seed=None) -> list:
    """Condition, sample ``n_queries`` subproblems in one pass, solve each exactly.

    Costs two passes over ``A`` plus one more to evaluate all the objectives
    (skipped when ``cfg.evaluate`` is False).  With ``s_cond="auto"`` a
    failed conditioning is retried at twice the sketch size: one more pass
    when the sketch is rank deficient, two more when the sampling pass
    shows the basis is badly conditioned (expected sample size below
    ``s/10``).  ``extra["cond_retries"]`` counts the retries.

    Returns
    -------
    list of SolveReport, one per query, sharing the same ledger totals.
    """
    if n_queries < 1:
        raise ValueError("n_queries must be >= 1")
    cfg = cfg or L1Config()
    t0 = time.perf_counter()
    seed = as_seedspec(seed)
    a, b, x_star, f_star = _problem(inst)
    ledger = CostLedger()
    m, n = a.shape
    if cfg.s in (None, "auto"):
        s, s_theory = default_sample_size(n, cfg)
    else:
        s, s_theory = int(cfg.s), None
    auto = cfg.s_cond in (None, "auto")
    retries, s_cond = 0, None
    for attempt in range(4):
        pre, retries, s_cond = _condition_auto(a, cfg, seed.spawn(0), ledger, retries, s_cond)
        kappa = float("nan")
        if cfg.normalization == "mapper":
            kappa = _mapper_kappa(a, pre, cfg.kappa1)
        sseed = seed.spawn(1).spawn(attempt) if attempt else seed.spawn(1)
        samples, dist = multi_sample_pass(a, b, pre, s, n_queries, sseed, cfg.fast, cfg.normalization,
                                          kappa, ledger)
        if not auto or cfg.normalization != "theorem" or dist.probs.sum() >= s / 10 or attempt == 3:
            break
        retries, s_cond = retries + 1, 2 * s_cond
    xs = []
    infos = []
    for rows, scale, ab in samples:
        if rows.size < n:
            xs.append(np.full(n, np.nan))
            infos.append({"kept_rows": int(rows.size), "error": "too few rows sampled"})
            continue
        ab = ab.copy()
        ab[:, n] *= -1.0
        z, info = ipm_l1(L1Subproblem(ab, form="homogeneous"), tol=cfg.ipm_tol, return_info=True)
        # last coordinate of z is fixed at one by the constraint
        xs.append(z[:n] / z[n])
        infos.append({"kept_rows": int(rows.size), "ipm_iterations": info["iterations"]})
    X = np.column_stack(xs)
    ok = np.isfinite(X).all(axis=0)
    fh = np.full(n_queries, np.nan)
    if cfg.evaluate and ok.any():
        fh[ok] = _objectives(a, b, X[:, ok], ledger)
    wall = (time.perf_counter() - t0) * 1e3
    reports = []
    for q in range(n_queries):
        rep = SolveReport(x_hat=X[:, q], f_hat=None if np.isnan(fh[q]) else float(fh[q]), iterations=0,
                          ledger=ledger.snapshot(), wall_ms=wall, method="l1_sample",
                          variant=pre.source.get("variant"), s=int(s), seed=seed.master_seed,
                          extra={**infos[q], "query": q, "s_theory": s_theory, "cond_retries": retries,
                                 "expected_rows": float(dist.probs.sum())})
        if f_star is not None and rep.f_hat is not None and f_star > 0:
            rep.rel_err_f = abs(rep.f_hat - f_star) / f_star
        if x_star is not None and ok[q]:
            rep.rel_err_x = float(np.linalg.norm(X[:, q] - x_star) / np.linalg.norm(x_star))
        reports.append(rep)
    return reports


def best_of(reports) -> SolveReport:
    """Query with the smallest evaluated objective."""
    valid = [r for r in reports if r.f_hat is not None]
    return min(valid, key=lambda r: r.f_hat)


def solve_l1_exact(inst, tol: float = 1e-10) -> SolveReport:
    """Interior-point oracle on the full problem (in memory)."""
    t0 = time.perf_counter()
    a, b, x_star, f_star = _problem(inst)
    ledger = CostLedger().record_pass()
    a = as_dense(np.asarray(a))
    x, info = ipm_l1(L1Subproblem(a, b), tol=tol, return_info=True)
    rep = SolveReport(x_hat=x, f_hat=info["objective"], iterations=info["iterations"], ledger=ledger,
                      wall_ms=(time.perf_counter() - t0) * 1e3, method="l1_exact")
    if f_star:
        rep.rel_err_f = abs(rep.f_hat - f_star) / f_star
    if x_star is not None:
        rep.rel_err_x = float(np.linalg.norm(x - x_star) / np.linalg.norm(x_star))
    return rep
