"""Exact solvers for small l1 regression problems.

``ipm_l1`` solves the linear program

    min 1'u + 1'v   s.t.  A x + u - v = b,  u, v >= 0

with a Mehrotra predictor-corrector interior-point method.  The dual is
``max b'z`` subject to ``A'z = 0`` and ``-1 <= z <= 1``; eliminating the
slack variables reduces every Newton step to one ``n x n`` weighted
least-squares system.  An optional crossover then moves to a basic
solution, which interpolates ``n`` rows exactly.

``irls_l1`` is the iteratively reweighted least-squares alternative, kept as
an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import MaxIters
from .linalg import as_dense, lstsq_qr, min_length_solve


@dataclass
class L1Subproblem:
    """An l1 regression problem in residual or homogeneous form.

    Residual form: ``min ||A x - b||_1``.
    Homogeneous form: ``min ||A z||_1`` subject to ``c'z = 1``; ``b`` is unused.
    """

    a: np.ndarray
    b: np.ndarray | None = None
    form: str = "residual"
    c: np.ndarray | None = None

    def __post_init__(self):
        self.a = as_dense(self.a)
        if self.form not in ("residual", "homogeneous"):
            raise ValueError("form must be 'residual' or 'homogeneous'")
        if self.form == "residual":
            if self.b is None:
                raise ValueError("residual form needs b")
            self.b = np.asarray(self.b, dtype=np.float64).ravel()
            if self.b.shape[0] != self.a.shape[0] or not np.isfinite(self.b).all():
                raise ValueError("b must be finite with one entry per row of a")
        else:
            if self.c is None:
                self.c = np.zeros(self.a.shape[1])
                self.c[-1] = 1.0
            self.c = np.asarray(self.c, dtype=np.float64).ravel()
            if self.c.shape[0] != self.a.shape[1] or not np.any(self.c):
                raise ValueError("c must be a nonzero vector with one entry per column")

    @classmethod
    def from_regression(cls, a, b) -> "L1Subproblem":
        """Homogeneous form of ``min ||Ax - b||_1``: ``A_bar = [A, -b]``, ``c = e_last``."""
        a = as_dense(a)
        return cls(np.hstack([a, -np.asarray(b, dtype=np.float64).reshape(-1, 1)]), form="homogeneous")

    def objective(self, x) -> float:
        if self.form == "residual":
            return float(np.abs(self.a @ x - self.b).sum())
        return float(np.abs(self.a @ x).sum())


def _constraint_basis(c):
    """``z0`` with ``c'z0 = 1`` and an orthonormal basis ``W`` of the complement of ``c``."""
    k = c.shape[0]
    q, _ = np.linalg.qr(c.reshape(-1, 1), mode="complete")
    return c / (c @ c), q[:, 1:k]


def _to_residual(prob: L1Subproblem):
    if prob.form == "residual":
        return prob.a, prob.b, None
    z0, w = _constraint_basis(prob.c)
    return prob.a @ w, -(prob.a @ z0), (z0, w)


def _from_residual(x, lift):
    if lift is None:
        return x
    z0, w = lift
    return z0 + w @ x


def _max_step(x, dx):
    neg = dx < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-x[neg] / dx[neg])))


def _weighted_solve(a, dinv, rhs):
    g = (a * dinv[:, None]).T @ a
    try:
        return sla.cho_solve(sla.cho_factor(g, check_finite=False), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(g, rhs, rcond=None)[0]


def _vertex(a, b, r, f_ref):
    """Basic solution through the ``n`` independent rows with smallest residuals."""
    m, n = a.shape
    order = np.argsort(np.abs(r), kind="stable")
    basis = np.zeros((n, n))
    picked = []
    k = 0
    for i in order:
        row = a[i]
        nrm = np.linalg.norm(row)
        if nrm == 0:
            continue
        res = row - basis[:k].T @ (basis[:k] @ row)
        rn = np.linalg.norm(res)
        if rn > 1e-8 * nrm:
            basis[k] = res / rn
            picked.append(i)
            k += 1
            if k == n:
                break
    if k < n:
        return None
    try:
        x = np.linalg.solve(a[picked], b[picked])
    except np.linalg.LinAlgError:
        return None
    f = float(np.abs(a @ x - b).sum())
    return (x, f) if f <= f_ref else None


def ipm_l1(prob: L1Subproblem, tol: float = 1e-8, max_iters: int = 200,
           crossover: bool = True, return_info: bool = False):
    """Solve an l1 regression subproblem to optimality.

    Parameters
    ----------
    prob : L1Subproblem
    tol : float
        Stop when the duality gap is at most ``tol * (1 + |f|)`` and the dual
        constraint residual ``||A'z||`` is at most ``tol * (1 + ||A||)``.
    crossover : bool
        Try to replace the interior solution by a basic (vertex) solution,
        kept only if its objective is no larger.

    Returns
    -------
    x : ndarray
    info : dict, only if ``return_info``
        ``iterations``, ``gap``, ``objective``, ``vertex`` (bool).

    Raises
    ------
    MaxIters
    """
    a, b, lift = _to_residual(prob)
    m, n = a.shape
    x = min_length_solve(a, b) if n else np.zeros(0)
    r = b - a @ x
    scale = max(float(np.mean(np.abs(r))), 1e-12 * (1.0 + float(np.max(np.abs(b), initial=0.0))))
    u = np.maximum(r, 0.0) + 0.1 * scale
    v = np.maximum(-r, 0.0) + 0.1 * scale
    z = np.zeros(m)
    anorm = float(np.linalg.norm(a, ord=np.inf)) if a.size else 0.0
    eta = 0.99995
    info = {"iterations": 0, "gap": np.inf, "objective": np.inf, "vertex": False}

    for it in range(1, max_iters + 1):
        su, sv = 1.0 - z, 1.0 + z
        rp = b - a @ x - u + v
        rd = a.T @ z
        f = float(np.abs(b - a @ x).sum())
        gap = f - float(b @ z)
        info.update(iterations=it - 1, gap=gap, objective=f)
        if abs(gap) <= tol * (1.0 + abs(f)) and np.linalg.norm(rd) <= tol * (1.0 + anorm) \
                and np.linalg.norm(rp) <= tol * (1.0 + np.abs(b).max(initial=0.0)):
            break
        mu = (u @ su + v @ sv) / (2 * m)
        d = u / su + v / sv
        dinv = 1.0 / d

        def newton(cu, cv):
            h = rp - cu / su + cv / sv
            dx = _weighted_solve(a, dinv, a.T @ (dinv * h) + rd)
            dz = dinv * (h - a @ dx)
            du = (cu + u * dz) / su
            dv = (cv - v * dz) / sv
            return dx, du, dv, dz

        dx, du, dv, dz = newton(-u * su, -v * sv)
        ap = min(_max_step(u, du), _max_step(v, dv))
        ad = min(_max_step(su, -dz), _max_step(sv, dz))
        mu_aff = ((u + ap * du) @ (su - ad * dz) + (v + ap * dv) @ (sv + ad * dz)) / (2 * m)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        cu = sigma * mu - u * su + du * dz
        cv = sigma * mu - v * sv - dv * dz
        dx, du, dv, dz = newton(cu, cv)
        ap = min(1.0, eta * min(_max_step(u, du), _max_step(v, dv)))
        ad = min(1.0, eta * min(_max_step(su, -dz), _max_step(sv, dz)))
        x = x + ap * dx
        u = u + ap * du
        v = v + ap * dv
        z = z + ad * dz
        np.clip(z, -1.0, 1.0, out=z)
    else:
        raise MaxIters(f"ipm_l1 did not converge in {max_iters} iterations (gap {info['gap']:.3e})",
                       report={"x": _from_residual(x, lift), **info})

    if crossover and n:
        vert = _vertex(a, b, b - a @ x, info["objective"])
        if vert is not None:
            x, info["objective"] = vert
            info["vertex"] = True
    x = _from_residual(x, lift)
    return (x, info) if return_info else x


def huber_objective(r, tau: float) -> float:
    """Smoothed l1 objective: ``|r|`` for ``|r| >= tau`` and ``r**2/(2 tau) + tau/2`` inside."""
    ar = np.abs(r)
    return float(np.where(ar >= tau, ar, ar * ar / (2 * tau) + tau / 2).sum())


def irls_l1(prob: L1Subproblem, tau: float = 1e-6, max_iters: int = 500, tol: float = 1e-10,
            return_info: bool = False):
    """Iteratively reweighted least squares for l1 regression.

    Each step solves ``min sum_i w_i r_i**2`` with ``w_i = 1/max(|r_i|, tau)``.
    This majorizes the smoothed objective :func:`huber_objective`, which
    therefore never increases; the iteration stops when the relative change
    of ``||r||_1`` falls below ``tol``.

    Raises
    ------
    MaxIters
        The partial solution is in ``exc.report["x"]``.
    """
    a, b, lift = _to_residual(prob)
    x = min_length_solve(a, b)
    r = b - a @ x
    f = float(np.abs(r).sum())
    hist = [huber_objective(r, tau)]
    for it in range(1, max_iters + 1):
        sw = 1.0 / np.sqrt(np.maximum(np.abs(r), tau))
        x = lstsq_qr(a * sw[:, None], b * sw)
        r = b - a @ x
        f_new = float(np.abs(r).sum())
        hist.append(huber_objective(r, tau))
        if abs(f - f_new) <= tol * max(f_new, 1e-300):
            f = f_new
            break
        f = f_new
    else:
        raise MaxIters(f"irls_l1 did not converge in {max_iters} iterations",
                       report={"x": _from_residual(x, lift), "history": hist})
    x = _from_residual(x, lift)
    info = {"iterations": it, "objective": f, "history": np.array(hist)}
    return (x, info) if return_info else x
