"""Test problems with known optima: UG/UB (uniform leverage) and NG/NB (nonuniform).

UG/UB matrices are ``U diag(linspace(1, 1/kappa, n)) V'`` with orthonormalized
Gaussian factors.  NG/NB matrices have the block form

    [[alpha B, R],
     [0,       I]]

with Gaussian ``B``, ``R = 1e-8 * uniform`` and a ``d/2 x d/2`` identity whose
rows carry leverage one.  Right-hand sides add Gaussian noise at 25% of
``||A x||`` to ``A x`` for a Gaussian ``x``.  The stored optimum is always
recomputed by an exact solver, since the noise moves it away from ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import passio
from .errors import IllegalStack
from .linalg import householder_qr, lstsq_qr, singular_values
from .randstream import as_seedspec, draw

FAMILIES = ("UG", "UB", "NG", "NB")
GOOD_KAPPA = 5.0
BAD_KAPPA = 1e6
NOISE = 0.25


@dataclass
class ProblemInstance:
    """A regression instance with its recorded optimum.

    ``mass_fraction`` is ``||U U' b||_2 / ||b||_2``, the share of ``b`` inside
    ``range(A)``.  ``meta`` carries generator details (``alpha``,
    ``n_identity`` for NG/NB, seeds, leverage extremes).
    """

    a: np.ndarray
    b: np.ndarray
    x_star: np.ndarray | None
    f_star: float | None
    family: str
    kappa_target: float
    repnum: int = 1
    stack_mode: str = "none"
    mass_fraction: float = float("nan")
    norm: str = "l2"
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.a.shape

    def objective(self, x) -> float:
        r = self.a @ x - self.b
        return float(np.abs(r).sum() if self.norm == "l1" else np.linalg.norm(r))


def _rhs(a, seed, i_x, i_err):
    x = draw(seed.spawn(i_x), "normal", a.shape[1])
    b = a @ x
    err = draw(seed.spawn(i_err), "normal", a.shape[0])
    return b + NOISE * np.linalg.norm(b) / np.linalg.norm(err) * err


def _mass_fraction(q, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(q.T @ b) / nb) if nb > 0 else 1.0


def solve_exact(a, b, norm: str = "l2", weights=None) -> np.ndarray:
    """Exact optimum under ``norm``; ``weights`` multiply the per-row residuals."""
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        a, b = a * w[:, None], b * w
    if norm == "l1":
        from .l1core import L1Subproblem, ipm_l1

        return ipm_l1(L1Subproblem(a, b), tol=1e-10)
    return lstsq_qr(a, b)


def _finish(a, b, family, kappa, norm, meta, q=None):
    if q is None:
        q = householder_qr(a).q
    x = solve_exact(a, b, norm)
    inst = ProblemInstance(a, b, x, 0.0, family, kappa, mass_fraction=_mass_fraction(q, b),
                           norm=norm, meta=meta)
    inst.f_star = inst.objective(x)
    lev = np.einsum("ij,ij->i", q, q)
    inst.meta.update(lev_max=float(lev.max()), lev_min=float(lev.min()))
    return inst


def gen_uniform(m: int, n: int, kappa: float, seed=None, norm: str = "l2") -> ProblemInstance:
    """UG (``kappa`` small) or UB (``kappa`` large) instance."""
    if not m >= n >= 2 or kappa < 1:
        raise ValueError("need m >= n >= 2 and kappa >= 1")
    seed = as_seedspec(seed)
    u = householder_qr(draw(seed.spawn(0), "normal", (m, n))).q
    v = householder_qr(draw(seed.spawn(1), "normal", (n, n))).q
    sig = np.linspace(1.0, 1.0 / kappa, n)
    a = (u * sig) @ v.T
    b = _rhs(a, seed, 2, 3)
    family = "UG" if kappa <= 100 else "UB"
    return _finish(a, b, family, kappa, norm, {"seed": seed.master_seed}, q=u)


def nonuniform_matrix(m: int, d: int, alpha: float, seed=None):
    seed = as_seedspec(seed)
    h = d // 2
    bmat = draw(seed.spawn(0), "normal", (m - h, h))
    rmat = 1e-8 * draw(seed.spawn(1), "uniform", (m - h, h))
    a = np.zeros((m, d))
    a[: m - h, :h] = alpha * bmat
    a[: m - h, h:] = rmat
    a[m - h :, h:] = np.eye(h)
    return a, bmat


def calibrate_alpha(bmat, kappa: float, fn=None, rtol: float = 1e-10) -> float:
    """Bisection for ``alpha`` with ``cond(alpha) = kappa``.

    ``fn(alpha)`` defaults to the condition number of the block-diagonal
    surrogate with singular values ``{alpha sigma_i(B)} U {1}``; the
    coupling block ``R`` is of order 1e-8 and moves the spectrum far less
    than the tolerance of interest.  The search runs on the branch where
    ``alpha sigma_min(B) >= 1`` so that ``kappa = alpha sigma_max(B)``.
    """
    sb = singular_values(bmat)
    smax, smin = sb[0], sb[-1]
    if fn is None:
        def fn(al):
            hi = max(al * smax, 1.0)
            lo = min(al * smin, 1.0)
            return hi / lo
    lo_a = 1.0 / smin
    if kappa < fn(lo_a) * (1 - 1e-12):
        raise ValueError(f"kappa={kappa} is below the reachable minimum {fn(lo_a):.4g}")
    hi_a = lo_a
    while fn(hi_a) < kappa:
        hi_a *= 2.0
    for _ in range(200):
        mid = math.sqrt(lo_a * hi_a)
        if fn(mid) < kappa:
            lo_a = mid
        else:
            hi_a = mid
        if hi_a / lo_a - 1 < rtol:
            break
    return math.sqrt(lo_a * hi_a)


def gen_nonuniform(m: int, d: int, alpha: float | None = None, seed=None, kappa: float | None = None,
                   norm: str = "l2") -> ProblemInstance:
    """NG/NB instance of shape ``m x d``.

    Give either ``alpha`` directly or a target ``kappa`` (``alpha`` is then
    calibrated by :func:`calibrate_alpha`).
    """
    if d % 2 or d < 2 or m <= d // 2:
        raise ValueError("need even d >= 2 and m > d/2")
    if (alpha is None) == (kappa is None):
        raise ValueError("give exactly one of alpha and kappa")
    seed = as_seedspec(seed)
    a, bmat = nonuniform_matrix(m, d, 1.0, seed)
    if alpha is None:
        alpha = calibrate_alpha(bmat, kappa)
    a[: m - d // 2, : d // 2] *= alpha
    b = _rhs(a, seed, 2, 3)
    kt = kappa if kappa is not None else float("nan")
    family = "NG" if (kappa is not None and kappa <= 100) else "NB"
    meta = {"seed": seed.master_seed, "alpha": float(alpha), "n_identity": d // 2}
    return _finish(a, b, family, kt, norm, meta)


def gen_family(family: str, m: int, n: int, seed=None, norm: str = "l2", kappa: float | None = None):
    """Instance of one of the four named families with the standard condition numbers."""
    family = family.upper()
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    if kappa is None:
        kappa = GOOD_KAPPA if family.endswith("G") else BAD_KAPPA
    if family.startswith("U"):
        inst = gen_uniform(m, n, kappa, seed, norm)
    else:
        inst = gen_nonuniform(m, n, seed=seed, kappa=kappa, norm=norm)
    inst.family = family
    return inst


def _stack_rows(inst: ProblemInstance, repnum: int, mode: str):
    """Row index map of the stacked matrix into the base instance."""
    m = inst.a.shape[0]
    if mode == "STACK1":
        return np.tile(np.arange(m), repnum)
    top = m - inst.meta["n_identity"]
    return np.concatenate([np.tile(np.arange(top), repnum), np.arange(top, m)])


def _check_stack(inst, mode):
    mode = mode.upper()
    if mode not in ("STACK1", "STACK2"):
        raise ValueError("mode must be STACK1 or STACK2")
    if mode == "STACK2" and (inst.family not in ("NG", "NB") or "n_identity" not in inst.meta):
        raise IllegalStack("STACK2 applies to NG/NB instances only")
    if inst.stack_mode != "none":
        raise IllegalStack("instance is already stacked")
    return mode


def stacked_optimum(inst: ProblemInstance, repnum: int, mode: str):
    """``(x_star, f_star)`` of the stacked problem, computed on the base-size problem."""
    mode = _check_stack(inst, mode)
    if mode == "STACK1":
        f = inst.f_star * (repnum if inst.norm == "l1" else math.sqrt(repnum))
        return inst.x_star, f
    m = inst.a.shape[0]
    top = m - inst.meta["n_identity"]
    # top rows appear repnum times: weight sqrt(repnum) in l2, repnum in l1
    w = np.ones(m)
    w[:top] = repnum if inst.norm == "l1" else math.sqrt(repnum)
    x = solve_exact(inst.a, inst.b, inst.norm, weights=w)
    r = w * (inst.a @ x - inst.b)
    f = float(np.abs(r).sum() if inst.norm == "l1" else np.linalg.norm(r))
    return x, f


def stack(inst: ProblemInstance, repnum: int, mode: str = "STACK1") -> ProblemInstance:
    """Vertically replicate an instance ``repnum`` times.

    STACK1 replicates ``[A b]`` whole: the optimum is unchanged and all
    leverage scores are divided by ``repnum``.  STACK2 (NG/NB only)
    replicates the ``[alpha B, R]`` block and keeps a single identity block,
    so coherence stays one; its optimum is recomputed.
    """
    if repnum < 1:
        raise ValueError("repnum must be >= 1")
    mode = _check_stack(inst, mode)
    idx = _stack_rows(inst, repnum, mode)
    x, f = stacked_optimum(inst, repnum, mode)
    a, b = inst.a[idx], inst.b[idx]
    xi = inst.mass_fraction if mode == "STACK1" else _mass_fraction(householder_qr(a).q, b)
    return replace(inst, a=a, b=b, x_star=x, f_star=f, repnum=repnum, stack_mode=mode,
                   mass_fraction=xi, meta=dict(inst.meta))


def write_instance(inst: ProblemInstance, a_path, b_path=None, repnum: int = 1, mode: str | None = None):
    """Write ``A`` (and ``b``) to RNLA/CSV files, stacking on the fly.

    The stacked matrix is streamed to disk slab by slab and never held in
    memory.  Returns ``(x_star, f_star)`` of what was written.
    """
    if mode is None or str(mode).lower() == "none":
        idx = np.arange(inst.a.shape[0])
        x, f = inst.x_star, inst.f_star
    else:
        idx = _stack_rows(inst, repnum, _check_stack(inst, mode))
        x, f = stacked_optimum(inst, repnum, mode)
    if str(a_path).lower().endswith(".csv"):
        passio.write_csv(a_path, inst.a[idx])
    else:
        _write_gathered(a_path, inst.a, idx)
    if b_path is not None:
        passio.save_matrix(b_path, inst.b[idx])
    return x, f


def _write_gathered(path, a, idx):
    rows, cols = idx.size, a.shape[1]
    with open(path, "wb") as fh:
        fh.write(passio.HEADER.pack(passio.MAGIC, passio.VERSION, rows, cols))
        step = max(1, (1 << 22) // max(cols, 1))
        for i in range(0, rows, step):
            fh.write(np.ascontiguousarray(a[idx[i : i + step]], dtype="<f8").tobytes())
