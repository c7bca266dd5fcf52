"""Independent reference solvers used by the tests."""

import itertools

import numpy as np
from scipy.optimize import linprog


def vertex_enum_l1(a, b):
    """``min ||Ax - b||_1`` by trying every basic solution (``x`` interpolating ``n`` rows).

    Exponential in ``n``; only for small instances.
    """
    m, n = a.shape
    best = (np.inf, None)
    for rows in itertools.combinations(range(m), n):
        sub = a[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        f = float(np.abs(a @ x - b).sum())
        if f < best[0]:
            best = (f, x)
    return best


def highs_l1(a, b):
    """``min ||Ax - b||_1`` as an LP solved by HiGHS dual simplex (a vertex method)."""
    m, n = a.shape
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    a_eq = np.hstack([a, -np.eye(m), np.eye(m)])
    bounds = [(None, None)] * n + [(0, None)] * (2 * m)
    res = linprog(c, A_eq=a_eq, b_eq=b, bounds=bounds, method="highs-ds")
    assert res.status == 0, res.message
    x = res.x[:n]
    return float(np.abs(a @ x - b).sum()), x
