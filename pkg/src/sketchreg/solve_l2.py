"""Least-squares solvers: direct baselines, sketch-and-solve, leverage sampling,
and sketch-preconditioned LSQR / Chebyshev semi-iteration (including LSRN).

Cost accounting
---------------
Every traversal of ``A`` (or of ``[A b]``) records one pass.  Iterative
solvers record one reduction per cluster-wide synchronization: two per LSQR
iteration (``||u||`` and ``A'u``), one per Chebyshev iteration (``A'r`` with
``||r||**2`` folded into the same allreduce).  When a preconditioner is built
from a sketch of ``[A b]``, the sums ``A'b`` and ``||b||**2`` that LSQR needs
to start are accumulated in the same pass, so the solve costs
``1 + 2k`` passes and ``2k`` (LSQR) or ``k`` (CS) reductions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import passio
from .errors import Divergence, MaxIters, RankDeficient
from .leverage import LeverageEstimate, approx_leverage, exact_leverage
from .linalg import (as_dense, lstsq_qr, min_length_solve, normal_eq_solve, require_full_rank,
                     triangular_factor)
from .matrixgen import ProblemInstance
from .passio import CostLedger, record_reduction
from .precond import (DEFAULT_DELTA, Preconditioner, gaussian_qr_interval, lsrn_alpha,
                      lsrn_from_sketch, lsrn_kappa_bound, lsrn_sketch_size, qr_precond)
from .randstream import as_seedspec, draw
from .sketch import SketchOperator, embedding_dim_default, finalize, sketch_flops, tile_contribution

RECORD_FIELDS = ("method", "variant", "s", "seed", "iters", "passes", "reductions",
                 "rel_err_f", "rel_err_x", "wall_ms")


@dataclass
class SolverConfig:
    eps: float = 0.5
    delta: float = 0.1
    s: int | str = "auto"
    sampling_mode: str = "bernoulli"
    max_iters: int = 500
    tol: float = 1e-14
    gamma_oversample: float = 2.0
    interval_delta: float = DEFAULT_DELTA
    evaluate: bool = True
    raise_on_max_iters: bool = True

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.sampling_mode not in ("bernoulli", "with_replacement"):
            raise ValueError("sampling_mode must be 'bernoulli' or 'with_replacement'")


@dataclass
class SolveReport:
    x_hat: np.ndarray
    f_hat: float | None
    rel_err_f: float | None = None
    rel_err_x: float | None = None
    iterations: int = 0
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ledger: CostLedger = field(default_factory=CostLedger)
    wall_ms: float = 0.0
    method: str = ""
    variant: str | None = None
    s: int | None = None
    seed: int | None = None
    error_history: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_record(self, deterministic: bool = False) -> dict:
        """The fixed report fields; ``deterministic`` zeroes the wall time."""
        return {
            "method": self.method,
            "variant": self.variant,
            "s": None if self.s is None else int(self.s),
            "seed": None if self.seed is None else int(self.seed),
            "iters": int(self.iterations),
            "passes": int(self.ledger.passes),
            "reductions": int(self.ledger.reductions),
            "rel_err_f": _float_or_none(self.rel_err_f),
            "rel_err_x": _float_or_none(self.rel_err_x),
            "wall_ms": 0.0 if deterministic else round(float(self.wall_ms), 3),
        }


def _float_or_none(v):
    return None if v is None or not np.isfinite(v) else float(v)


# ----------------------------------------------------------------- problem


@dataclass
class _Problem:
    a: object
    b: np.ndarray
    x_star: np.ndarray | None
    f_star: float | None
    ledger: CostLedger

    @property
    def m(self):
        return self.b.shape[0]

    @property
    def n(self):
        return self.a.shape[1]

    def stream_a(self):
        return passio.as_stream(self.a, ledger=self.ledger)

    def stream_ab(self):
        return passio.RowBlockStream((self.a, self.b), None, self.ledger)


def _problem(inst, ledger=None) -> _Problem:
    ledger = ledger if ledger is not None else CostLedger()
    if isinstance(inst, ProblemInstance):
        return _Problem(inst.a, np.asarray(inst.b, dtype=np.float64).ravel(), inst.x_star, inst.f_star, ledger)
    a, b = inst[0], inst[1]
    x_star = inst[2] if len(inst) > 2 else None
    f_star = inst[3] if len(inst) > 3 else None
    return _Problem(a, np.asarray(b, dtype=np.float64).ravel(), x_star, f_star, ledger)


def residual_norm(prob: _Problem, x) -> float:
    """``||A x - b||_2`` in one pass over ``[A b]``."""
    n = prob.n
    xe = np.append(np.asarray(x, dtype=np.float64), -1.0)

    def f(t, r0, tile):
        r = tile @ xe
        return float(r @ r)

    ss = passio.sum_tiles(prob.stream_ab(), f, empty=0.0, flops=2.0 * prob.m * (n + 1))
    return math.sqrt(ss)


def _finish(prob: _Problem, x, t0, method, variant=None, s=None, seed=None, cfg=None, f_hat=None, **kw):
    if f_hat is None and (cfg is None or cfg.evaluate):
        f_hat = residual_norm(prob, x)
    rep = SolveReport(x_hat=x, f_hat=f_hat, method=method, variant=variant, s=s, seed=seed,
                      ledger=prob.ledger.snapshot(), **kw)
    if prob.f_star is not None and f_hat is not None and prob.f_star > 0:
        rep.rel_err_f = abs(f_hat - prob.f_star) / prob.f_star
    if prob.x_star is not None:
        rep.rel_err_x = float(np.linalg.norm(x - prob.x_star) / np.linalg.norm(prob.x_star))
    rep.wall_ms = (time.perf_counter() - t0) * 1e3
    return rep


def _seed_int(seed) -> int | None:
    return None if seed is None else int(as_seedspec(seed).master_seed)


# ------------------------------------------------------------------ direct


def direct_solve(inst, method: str = "svd") -> SolveReport:
    """In-memory baseline: ``svd`` (min-length), ``qr`` or ``normal`` equations."""
    t0 = time.perf_counter()
    prob = _problem(inst)
    a = as_dense(prob.a)
    prob.ledger.record_pass()
    solver = {"svd": min_length_solve, "qr": lstsq_qr, "normal": normal_eq_solve}[method]
    x = solver(a, prob.b)
    r = a @ x - prob.b
    return _finish(prob, x, t0, f"direct_{method}", f_hat=float(np.linalg.norm(r)))


# ------------------------------------------------------- sketch-and-solve


def resolve_s(variant: str, n: int, m: int, cfg: SolverConfig) -> int:
    if cfg.s in (None, "auto"):
        s = embedding_dim_default(variant, n, cfg.eps, cfg.delta, m=m)
        return min(s, m) if variant == "srdht" else s
    return int(cfg.s)


def sketch_and_solve_l2(inst, op: SketchOperator, cfg: SolverConfig | None = None) -> SolveReport:
    """Solve ``min ||Phi A x - Phi b||`` exactly for a sketch of ``[A b]`` taken in one pass.

    Raises
    ------
    RankDeficient
        ``Phi A`` lost rank; increase ``s``.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    prob = _problem(inst)
    n = prob.n
    sab = op.apply(prob.stream_ab())
    sa, sb = sab[:, :n], sab[:, n]
    _check_sketch_rank(sa)
    x = min_length_solve(sa, sb)
    return _finish(prob, x, t0, "sketch", op.variant, op.s, _seed_int(op.seed), cfg)


def _check_sketch_rank(sa):
    if sa.shape[0] < sa.shape[1]:
        raise RankDeficient(f"sketch has {sa.shape[0]} rows for {sa.shape[1]} columns; increase s")
    try:
        require_full_rank(triangular_factor(sa, check_rank=False))
    except RankDeficient as exc:
        raise RankDeficient(f"sketched matrix is rank deficient ({exc}); increase s") from None


# ---------------------------------------------------------------- sampling


@dataclass
class SampledProblem:
    a: np.ndarray
    b: np.ndarray
    rows: np.ndarray
    weights: np.ndarray


def sampling_probabilities(lev: LeverageEstimate, s: float) -> np.ndarray:
    """Bernoulli inclusion probabilities ``q_i = min(1, s p_i)``."""
    return np.minimum(1.0, s * lev.probs)


def leverage_sample_l2(inst, lev: LeverageEstimate, s: float, mode: str = "bernoulli", seed=None,
                       ledger: CostLedger | None = None) -> SampledProblem:
    """Draw a rescaled row sample of ``[A b]`` in one pass.

    ``bernoulli`` keeps row ``i`` with probability ``q_i = min(1, s p_i)`` and
    scales it by ``1/sqrt(q_i)``; ``with_replacement`` makes ``r = s``
    i.i.d. draws from ``p`` and scales each by ``1/sqrt(r p_i)``.
    """
    prob = _problem(inst, ledger)
    m = prob.m
    seed = as_seedspec(seed)
    p = lev.probs
    if mode == "bernoulli":
        q = sampling_probabilities(lev, s)
        u = draw(seed, "uniform", m)
        rows = np.flatnonzero(u < q)
        weights = 1.0 / np.sqrt(q[rows])
    elif mode == "with_replacement":
        r = int(s)
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        u = draw(seed, "uniform", r)
        rows = np.sort(np.minimum(np.searchsorted(cdf, u, side="right"), m - 1))
        weights = 1.0 / np.sqrt(r * p[rows])
    else:
        raise ValueError("mode must be 'bernoulli' or 'with_replacement'")
    uniq, counts = np.unique(rows, return_counts=True)

    def gather(t, r0, tile):
        lo, hi = np.searchsorted(uniq, [r0, r0 + tile.shape[0]])
        return np.repeat(tile[uniq[lo:hi] - r0], counts[lo:hi], axis=0)

    n = prob.n
    sab = passio.concat_tiles(prob.stream_ab(), gather, empty=np.zeros((0, n + 1)))
    sab *= weights[:, None]
    return SampledProblem(sab[:, :n], sab[:, n], rows, weights)


def sample_and_solve_l2(inst, scores="approx", s: float | None = None, cfg: SolverConfig | None = None,
                        seed=None, proj1: SketchOperator | None = None) -> SolveReport:
    """Leverage-score sampling followed by an exact solve of the sample.

    ``scores`` is ``"approx"`` (two-pass estimate), ``"exact"``,
    ``"uniform"`` or a precomputed :class:`LeverageEstimate`.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    prob = _problem(inst)
    seed = as_seedspec(seed)
    m, n = prob.m, prob.n
    if s is None:
        s = cfg.s if cfg.s not in (None, "auto") else 50 * n
    if isinstance(scores, LeverageEstimate):
        lev, label = scores, "given"
    elif scores == "uniform":
        lev, label = LeverageEstimate(np.ones(m), 1.0, {"kind": "uniform"}), "unif"
    elif scores == "exact":
        prob.ledger.record_pass()
        lev, label = exact_leverage(as_dense(prob.a)), "exact"
    elif scores == "approx":
        lev, label = approx_leverage(prob.stream_a(), proj1=proj1, seed=seed.spawn(1)), "appr"
    else:
        raise ValueError(f"unknown scores {scores!r}")
    samp = leverage_sample_l2(prob_tuple(prob), lev, s, cfg.sampling_mode, seed.spawn(2), ledger=prob.ledger)
    if samp.a.shape[0] < n:
        raise RankDeficient(f"sample kept {samp.a.shape[0]} rows for {n} columns; increase s")
    _check_sketch_rank(samp.a)
    x = min_length_solve(samp.a, samp.b)
    rep = _finish(prob, x, t0, f"samp_{label}", lev.method.get("proj1"), int(s), seed.master_seed, cfg)
    rep.extra["kept_rows"] = int(samp.rows.size)
    return rep


def prob_tuple(prob: _Problem):
    return (prob.a, prob.b, prob.x_star, prob.f_star)


# --------------------------------------------------------------- operators


class StreamOperator:
    """``A``, ``A'`` products over a row stream, each costing one pass."""

    def __init__(self, a, ledger: CostLedger | None = None):
        self.stream = passio.as_stream(a, ledger=ledger)

    @property
    def shape(self):
        return self.stream.shape

    def matvec(self, x):
        return passio.matvec(self.stream, x)

    def rmatvec(self, y):
        return passio.rmatvec(self.stream, y)

    def rmatvec_norm(self, y):
        """``(A'y, y'y)`` accumulated in the same pass."""
        y = np.asarray(y, dtype=np.float64)

        def f(t, r0, tile):
            yt = y[r0 : r0 + tile.shape[0]]
            return np.append(tile.T @ yt, yt @ yt)

        out = passio.sum_tiles(self.stream, f, empty=np.zeros(self.stream.cols + 1),
                               flops=2.0 * self.stream.rows * self.stream.cols)
        return out[:-1], float(out[-1])


def _precond_ops(precond: Preconditioner | None, n: int):
    if precond is None:
        return (lambda y: y), (lambda z: z)
    return precond.apply, precond.apply_t


def lsqr(apply_a, apply_at, b, precond: Preconditioner | None = None, tol: float = 1e-14,
         max_iters: int = 500, ledger: CostLedger | None = None, setup=None, x_star=None,
         raise_on_max: bool = True) -> SolveReport:
    """LSQR (Golub-Kahan bidiagonalization) on ``min ||A N y - b||``, returning ``x = N y``.

    Parameters
    ----------
    apply_a, apply_at : callable
        ``v -> A v`` and ``u -> A' u``.  Pass accounting is their business.
    precond : Preconditioner, optional
    tol : float
        Stop when ``||r|| <= tol ||b||`` or the estimated
        ``||(AN)'r|| / (||AN||_F ||r||) <= tol``.
    setup : (float, ndarray), optional
        ``(||b||, A'b)`` if already accumulated elsewhere; otherwise one
        extra ``A'`` product and one reduction are spent on it.
    x_star : ndarray, optional
        Reference solution for the per-iteration error history.

    Raises
    ------
    MaxIters
        With the partial :class:`SolveReport` on ``exc.report``.
    """
    t0 = time.perf_counter()
    ledger = ledger if ledger is not None else CostLedger()
    b = np.asarray(b, dtype=np.float64)
    if setup is None:
        atb = apply_at(b)
        beta = float(np.linalg.norm(b))
        record_reduction(ledger)
    else:
        beta, atb = setup
    n = atb.shape[0]
    nap, napt = _precond_ops(precond, n)
    y = np.zeros(n)
    hist, errs = [beta], []
    if beta == 0.0:
        return _iter_report(nap(y), 0, hist, errs, ledger, t0, "lsqr", 0.0)
    u = b / beta
    v = napt(atb) / beta
    alpha = float(np.linalg.norm(v))
    if alpha == 0.0:
        return _iter_report(nap(y), 0, hist, errs, ledger, t0, "lsqr", beta)
    v /= alpha
    w = v.copy()
    phibar, rhobar = beta, alpha
    anorm2 = 0.0
    bnorm = beta
    converged = False
    k = 0
    for k in range(1, max_iters + 1):
        u = apply_a(nap(v)) - alpha * u
        beta = float(np.linalg.norm(u))
        record_reduction(ledger)
        if beta > 0:
            u /= beta
        anorm2 += alpha * alpha + beta * beta
        v = napt(apply_at(u)) - beta * v
        record_reduction(ledger)
        alpha = float(np.linalg.norm(v))
        if alpha > 0:
            v /= alpha
        rho = math.hypot(rhobar, beta)
        c, sn = rhobar / rho, beta / rho
        theta = sn * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = sn * phibar
        y += (phi / rho) * w
        w = v - (theta / rho) * w
        hist.append(phibar)
        if x_star is not None:
            errs.append(float(np.linalg.norm(nap(y) - x_star) / np.linalg.norm(x_star)))
        arnorm = phibar * alpha * abs(c)
        if phibar <= tol * bnorm or arnorm <= tol * math.sqrt(anorm2) * phibar or alpha == 0 or beta == 0:
            converged = True
            break
    rep = _iter_report(nap(y), k, hist, errs, ledger, t0, "lsqr", phibar)
    if not converged and raise_on_max:
        raise MaxIters(f"LSQR did not converge in {max_iters} iterations", report=rep)
    rep.extra["converged"] = converged
    return rep


def _iter_report(x, k, hist, errs, ledger, t0, method, rnorm):
    return SolveReport(x_hat=x, f_hat=float(rnorm), iterations=k, residual_history=np.asarray(hist),
                       ledger=ledger.snapshot(), wall_ms=(time.perf_counter() - t0) * 1e3, method=method,
                       error_history=np.asarray(errs) if errs else None, extra={"converged": True})


def chebyshev_semi_iterative(apply_a, apply_at, b, interval, precond: Preconditioner | None = None,
                             tol: float = 1e-14, max_iters: int = 500, ledger: CostLedger | None = None,
                             x_star=None, raise_on_max: bool = True, apply_at_norm=None) -> SolveReport:
    """Chebyshev semi-iteration on the normal equations of ``min ||A N y - b||``.

    The eigenvalues of ``(AN)'(AN)`` are assumed to lie in
    ``[sigma_lo**2, sigma_hi**2]``.  With ``d`` and ``c`` the center and
    half-width of that interval, the two-term recurrence is

        v <- (AN)' r + beta v,   y <- y + alpha v,   r <- r - alpha (AN) v

    with ``(alpha, beta) = (1/d, 0)`` first, ``(1/(d - c^2/(2d)), c^2/(2 d^2))``
    second, and ``beta = (alpha c / 2)^2``, ``alpha = 1/(d - alpha c^2/4)``
    afterwards.

    Parameters
    ----------
    interval : (float, float)
        ``(sigma_lo, sigma_hi)`` with ``0 < sigma_lo < sigma_hi < inf``.
    apply_at_norm : callable, optional
        ``r -> (A'r, r'r)`` in a single pass; otherwise ``r'r`` is formed
        locally.  Either way one reduction is recorded per iteration.

    Raises
    ------
    Divergence
        The residual norm grew past 10x its best value, which happens when
        the interval misses part of the spectrum.
    MaxIters
    """
    t0 = time.perf_counter()
    lo, hi = map(float, interval)
    if not (0 < lo < hi < math.inf):
        raise ValueError(f"invalid singular value interval {interval}")
    ledger = ledger if ledger is not None else CostLedger()
    b = np.asarray(b, dtype=np.float64)
    lmin, lmax = lo * lo, hi * hi
    d, c = (lmax + lmin) / 2, (lmax - lmin) / 2
    if apply_at_norm is None:
        def apply_at_norm(r):
            return apply_at(r), float(r @ r)
    n_out = None
    r = b.copy()
    y = v = None
    alpha = beta = 0.0
    hist, errs = [], []
    best = math.inf
    bnorm = float(np.linalg.norm(b))
    converged = False
    iters = 0
    nap = napt = None
    for k in range(max_iters):
        atr, rr = apply_at_norm(r)
        record_reduction(ledger)
        if nap is None:
            n_out = atr.shape[0]
            nap, napt = _precond_ops(precond, n_out)
            y, v = np.zeros(n_out), np.zeros(n_out)
        g = napt(atr)
        rnorm = math.sqrt(rr)
        hist.append(rnorm)
        if not np.isfinite(rnorm) or rnorm > 10.0 * best:
            rep = _iter_report(nap(y), k, hist, errs, ledger, t0, "cs", rnorm)
            raise Divergence(f"Chebyshev residual grew from {best:.3e} to {rnorm:.3e}; "
                             "the singular value interval does not cover the spectrum", report=rep)
        best = min(best, rnorm)
        converged = rnorm <= tol * bnorm or float(np.linalg.norm(g)) <= tol * hi * rnorm
        if k == 0:
            beta, alpha = 0.0, 1.0 / d
        elif k == 1:
            beta = 0.5 * (c / d) ** 2
            alpha = 1.0 / (d - c * c / (2 * d))
        else:
            beta = (alpha * c / 2) ** 2
            alpha = 1.0 / (d - alpha * c * c / 4)
        # the step is taken even after the convergence test passes, so every
        # iteration is one reduction plus one A' and one A product
        v = g + beta * v
        y = y + alpha * v
        r = r - alpha * apply_a(nap(v))
        iters = k + 1
        if x_star is not None:
            errs.append(float(np.linalg.norm(nap(y) - x_star) / np.linalg.norm(x_star)))
        if converged:
            break
    if nap is None:
        nap = lambda z: z
        y = np.zeros(0)
    rep = _iter_report(nap(y), iters, hist, errs, ledger, t0, "cs", hist[-1] if hist else bnorm)
    if not converged and raise_on_max:
        raise MaxIters(f"Chebyshev iteration did not converge in {max_iters} iterations", report=rep)
    rep.extra["converged"] = converged
    return rep


# ------------------------------------------------------ preconditioned path


def _fused_sketch_pass(prob: _Problem, op: SketchOperator, scaled: bool):
    """One pass over ``[A b]``: the sketch of ``A`` plus ``A'b`` and ``b'b``."""
    n = prob.n
    contrib = tile_contribution(op)

    def f(t, r0, tile):
        ta, tb = tile[:, :n], tile[:, n]
        return contrib(t, r0, ta), ta.T @ tb, float(tb @ tb)

    def comb(x, y):
        return x[0] + y[0], x[1] + y[1], x[2] + y[2]

    raw, atb, bb = passio.map_blocks(prob.stream_ab(), f, comb, tile_rows=op.tile_rows,
                                     empty=(np.zeros((op.s, n)), np.zeros(n), 0.0),
                                     flops=sketch_flops(op, prob.m, n + 1))
    if scaled:
        finalize(op, raw)
    return raw, atb, math.sqrt(bb)


def preconditioned_solve(inst, variant: str = "gaussian", s: int | str | None = None,
                         iterative: str = "lsqr", cfg: SolverConfig | None = None, seed=None,
                         kind: str = "qr") -> SolveReport:
    """Sketch once, precondition, then iterate with LSQR or Chebyshev.

    ``kind="qr"`` uses ``N = R^{-1}`` from the QR of the (scaled) sketch;
    ``kind="lsrn"`` uses the unscaled Gaussian sketch with
    ``s = ceil(gamma n)`` and ``N = V Sigma^{-1}``.  Chebyshev needs a
    singular value interval, which is available for Gaussian sketches.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    prob = _problem(inst)
    m, n = prob.m, prob.n
    seed = as_seedspec(seed)
    if kind == "lsrn":
        variant = "gaussian"
        s = lsrn_sketch_size(n, cfg.gamma_oversample)
    else:
        s = resolve_s(variant, n, m, SolverConfig(eps=cfg.eps, delta=cfg.delta, s=s if s is not None else cfg.s))
    op = SketchOperator(variant, s, m, seed)
    raw, atb, bnorm = _fused_sketch_pass(prob, op, scaled=(kind != "lsrn"))
    if kind == "lsrn":
        pre = lsrn_from_sketch(raw, s, cfg.interval_delta, op.describe() | {"unscaled": True})
    else:
        pre = qr_precond(raw, op.describe())
        if op.variant == "gaussian":
            pre.predicted_interval = gaussian_qr_interval(n, s, cfg.interval_delta)
    A = StreamOperator(prob.a, prob.ledger)
    if iterative == "lsqr":
        try:
            rep = lsqr(A.matvec, A.rmatvec, prob.b, pre, cfg.tol, cfg.max_iters, prob.ledger,
                       setup=(bnorm, atb), x_star=prob.x_star, raise_on_max=cfg.raise_on_max_iters)
        except MaxIters as exc:
            exc.report = _merge(prob, exc.report, t0, kind, op, s, seed, cfg, pre)
            raise
    elif iterative == "cs":
        if pre.predicted_interval is None or not np.isfinite(pre.predicted_interval[1]):
            raise ValueError("Chebyshev iteration needs a finite predicted interval; "
                             "use a Gaussian sketch with a larger s")
        try:
            rep = chebyshev_semi_iterative(A.matvec, A.rmatvec, prob.b, pre.predicted_interval, pre,
                                           cfg.tol, cfg.max_iters, prob.ledger, x_star=prob.x_star,
                                           raise_on_max=cfg.raise_on_max_iters, apply_at_norm=A.rmatvec_norm)
        except (MaxIters, Divergence) as exc:
            exc.report = _merge(prob, exc.report, t0, kind, op, s, seed, cfg, pre)
            raise
    else:
        raise ValueError("iterative must be 'lsqr' or 'cs'")
    return _merge(prob, rep, t0, kind, op, s, seed, cfg, pre)


def _merge(prob, rep, t0, kind, op, s, seed, cfg, pre):
    method = ("lsrn_" if kind == "lsrn" else "") + rep.method
    out = _finish(prob, rep.x_hat, t0, method, op.variant, s, seed.master_seed, cfg,
                  iterations=rep.iterations, residual_history=rep.residual_history,
                  error_history=rep.error_history, extra=dict(rep.extra))
    out.extra["predicted_interval"] = pre.predicted_interval
    if kind == "lsrn":
        out.extra["kappa_bound"] = lsrn_kappa_bound(prob.n, s, lsrn_alpha(s, cfg.interval_delta))
    out.extra["preconditioner"] = pre
    return out


def lsrn_solve(inst, gamma: float = 2.0, iterative: str = "lsqr", cfg: SolverConfig | None = None,
               seed=None) -> SolveReport:
    """LSRN: unscaled Gaussian sketch with ``s = ceil(gamma n)``, ``N = V Sigma^{-1}``, then LSQR or CS."""
    cfg = cfg or SolverConfig()
    cfg = SolverConfig(**{**cfg.__dict__, "gamma_oversample": gamma})
    return preconditioned_solve(inst, iterative=iterative, cfg=cfg, seed=seed, kind="lsrn")


def plain_lsqr(inst, cfg: SolverConfig | None = None) -> SolveReport:
    """Unpreconditioned LSQR over the streamed matrix."""
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    prob = _problem(inst)
    A = StreamOperator(prob.a, prob.ledger)
    try:
        rep = lsqr(A.matvec, A.rmatvec, prob.b, None, cfg.tol, cfg.max_iters, prob.ledger,
                   x_star=prob.x_star, raise_on_max=cfg.raise_on_max_iters)
    except MaxIters as exc:
        r = exc.report
        exc.report = _finish(prob, r.x_hat, t0, "lsqr", cfg=cfg, iterations=r.iterations,
                             residual_history=r.residual_history, error_history=r.error_history)
        raise
    return _finish(prob, rep.x_hat, t0, "lsqr", cfg=cfg, iterations=rep.iterations,
                   residual_history=rep.residual_history, error_history=rep.error_history)
