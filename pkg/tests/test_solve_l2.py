import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from sketchreg import passio
from sketchreg.errors import Divergence, MaxIters, RankDeficient
from sketchreg.leverage import LeverageEstimate, exact_leverage
from sketchreg.matrixgen import gen_family
from sketchreg.passio import CostLedger
from sketchreg.precond import lsrn_alpha, lsrn_kappa_bound, qr_precond
from sketchreg.sketch import SketchOperator
from sketchreg.solve_l2 import (RECORD_FIELDS, SolverConfig, chebyshev_semi_iterative, direct_solve,
                                leverage_sample_l2, lsqr, lsrn_solve, plain_lsqr, preconditioned_solve,
                                sample_and_solve_l2, sketch_and_solve_l2)


@pytest.fixture(scope="module")
def ug():
    return gen_family("UG", 4000, 40, seed=11)


@pytest.fixture(scope="module")
def nb():
    return gen_family("NB", 4000, 40, seed=12)


def dense_ops(a):
    return (lambda v: a @ v), (lambda u: a.T @ u)


def spectrum_matrix(rng, m, sv):
    u, _ = np.linalg.qr(rng.standard_normal((m, len(sv))))
    v, _ = np.linalg.qr(rng.standard_normal((len(sv), len(sv))))
    return (u * sv) @ v.T


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eps=1.0)
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(sampling_mode="poisson")


def test_direct_solvers_agree(ug):
    reps = [direct_solve(ug, m) for m in ("svd", "qr", "normal")]
    for r in reps:
        assert r.rel_err_f < 1e-10
        assert r.ledger.passes == 1
    np.testing.assert_allclose(reps[1].x_hat, reps[0].x_hat, rtol=1e-8)


@pytest.mark.parametrize("variant", ["gaussian", "srdht", "countsketch", "rademacher"])
def test_consistent_system_recovered(rng, variant):
    a = rng.standard_normal((2048, 10))
    x0 = rng.standard_normal(10)
    s = 400 if variant == "countsketch" else 60
    rep = sketch_and_solve_l2((a, a @ x0), SketchOperator(variant, s, 2048, 4))
    np.testing.assert_allclose(rep.x_hat, x0, atol=1e-10)
    assert rep.ledger.passes == 2  # sketch of [A b] plus the objective evaluation


def test_sketch_and_solve_gaussian_10n():
    # expected rel_err_f is sqrt(1 + n/(s-n-1)) - 1 = 0.054 here, so this sits at the edge (see ledger)
    inst = gen_family("UG", 20_000, 100, seed=1)
    errs = [sketch_and_solve_l2(inst, SketchOperator("gaussian", 1000, 20_000, k)).rel_err_f for k in range(20)]
    assert np.mean(np.array(errs) <= 0.05) >= 0.9


def test_sketch_and_solve_contract_default_dims():
    inst = gen_family("UG", 3000, 10, seed=2)
    cfg = SolverConfig(eps=0.5)
    from sketchreg.solve_l2 import resolve_s
    s = resolve_s("gaussian", 10, 3000, cfg)
    hits = [sketch_and_solve_l2(inst, SketchOperator("gaussian", s, 3000, k), cfg).f_hat <= 1.5 * inst.f_star
            for k in range(20)]
    assert sum(hits) >= 18


def test_sketch_rank_deficient(nb):
    with pytest.raises(RankDeficient):
        sketch_and_solve_l2(nb, SketchOperator("gaussian", 30, 4000, 1))


def test_record_fields_exact(ug):
    rep = sketch_and_solve_l2(ug, SketchOperator("gaussian", 400, 4000, 7))
    rec = rep.to_record()
    assert tuple(rec) == RECORD_FIELDS and len(rec) == 10
    assert rec["seed"] == 7 and rec["method"] == "sketch"
    assert rep.to_record(deterministic=True)["wall_ms"] == 0.0


# ---------------------------------------------------------------- sampling


def test_uniform_sampling_with_s_equal_m_keeps_all_rows(ug):
    samp = leverage_sample_l2(ug, LeverageEstimate(np.ones(4000)), 4000, seed=1)
    assert samp.rows.size == 4000
    np.testing.assert_array_equal(samp.weights, 1.0)
    np.testing.assert_array_equal(samp.a, ug.a)


def test_leverage_one_rows_always_kept():
    inst = gen_family("NB", 1000, 20, seed=3)
    lev = exact_leverage(inst.a)
    ones = np.arange(990, 1000)
    for k in range(100):
        rows = leverage_sample_l2(inst, lev, 200, seed=k).rows
        assert np.isin(ones, rows).all()


def test_expected_kept_rows_within_three_sigma(nb):
    lev = exact_leverage(nb.a)
    q = np.minimum(1, 300 * lev.probs)
    mu, sd = q.sum(), np.sqrt((q * (1 - q)).sum())
    counts = [leverage_sample_l2(nb, lev, 300, seed=k).rows.size for k in range(60)]
    assert abs(np.mean(counts) - mu) <= 3 * sd / np.sqrt(60)


def test_kept_rows_near_s_without_capping(ug):
    lev = exact_leverage(ug.a)
    assert np.all(300 * lev.probs < 1)
    for k in range(20):
        assert abs(leverage_sample_l2(ug, lev, 300, seed=k).rows.size - 300) <= 3 * np.sqrt(300)


def test_with_replacement_weights(ug):
    lev = LeverageEstimate(np.ones(4000))
    samp = leverage_sample_l2(ug, lev, 500, mode="with_replacement", seed=2)
    assert samp.a.shape[0] == 500
    np.testing.assert_allclose(samp.weights, np.sqrt(4000 / 500))


def test_sampling_beats_uniform_on_nonuniform_leverage(nb):
    appr = sample_and_solve_l2(nb, "approx", 50 * 40, seed=1)
    assert appr.rel_err_f <= 0.05
    assert appr.ledger.passes == 4  # two leverage passes, one sampling pass, one objective pass
    try:
        unif = sample_and_solve_l2(nb, "uniform", 50 * 40, seed=1)
    except RankDeficient:
        return
    assert unif.rel_err_x > 0.5


# ------------------------------------------------------------------- LSQR


def test_lsqr_identity_one_iteration(rng):
    b = rng.standard_normal(7)
    rep = lsqr(lambda v: v, lambda u: u, b)
    assert rep.iterations == 1
    np.testing.assert_allclose(rep.x_hat, b, rtol=1e-14)


@given(st.integers(0, 10_000))
def test_lsqr_matches_scipy_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((60, 8)) * np.geomspace(1, 30, 8)
    b = rng.standard_normal(60)
    led = CostLedger()
    rep = lsqr(*dense_ops(a), b, tol=1e-12, ledger=led)
    ref = spla.lsqr(a, b, atol=1e-14, btol=1e-14)[0]
    np.testing.assert_allclose(rep.x_hat, ref, rtol=1e-7, atol=1e-9)
    assert led.reductions == 2 * rep.iterations + 1
    h = rep.residual_history
    assert np.all(np.diff(h) <= 1e-12 * h[0])


def test_lsqr_exact_preconditioner_converges_fast(nb):
    pre = qr_precond(nb.a)
    rep = lsqr(*dense_ops(nb.a), nb.b, pre, tol=1e-12, x_star=nb.x_star)
    assert rep.iterations <= 3
    assert rep.error_history[-1] < 1e-9


def test_lsqr_max_iters_carries_report(nb):
    with pytest.raises(MaxIters) as exc:
        plain_lsqr(nb, SolverConfig(max_iters=5))
    rep = exc.value.report
    assert rep.iterations == 5 and rep.ledger.reductions == 2 * 5 + 1


# -------------------------------------------------------------- Chebyshev


def test_chebyshev_synthetic_spectrum(rng):
    a = spectrum_matrix(rng, 300, np.linspace(0.9, 1.1, 12))
    b = rng.standard_normal(300)
    led = CostLedger()
    rep = chebyshev_semi_iterative(*dense_ops(a), b, (0.8, 1.2), tol=1e-10, ledger=led)
    x_ref = np.linalg.lstsq(a, b, rcond=None)[0]
    r_ref = np.linalg.norm(a @ x_ref - b)
    assert rep.iterations <= 40
    assert np.linalg.norm(a.T @ (a @ rep.x_hat - b)) <= 1e-10 * np.linalg.norm(b)
    assert np.linalg.norm(a @ rep.x_hat - b) == pytest.approx(r_ref, rel=1e-10)
    assert led.reductions == rep.iterations


def test_chebyshev_wrong_interval_diverges(rng):
    a = spectrum_matrix(rng, 300, np.linspace(0.5, 3.0, 12))
    b = rng.standard_normal(300)
    with pytest.raises(Divergence) as exc:
        chebyshev_semi_iterative(*dense_ops(a), b, (0.9, 1.1), max_iters=200)
    assert exc.value.report is not None


def test_chebyshev_rejects_bad_interval(rng):
    a = rng.standard_normal((20, 3))
    with pytest.raises(ValueError):
        chebyshev_semi_iterative(*dense_ops(a), np.ones(20), (1.0, np.inf))


# --------------------------------------------------- preconditioned solvers


def test_gaussian_preconditioned_lsqr_and_cs_agree():
    inst = gen_family("NB", 3000, 30, seed=5)
    cfg = SolverConfig(tol=1e-14)
    rl = preconditioned_solve(inst, "gaussian", 300, "lsqr", cfg, seed=2)
    rc = preconditioned_solve(inst, "gaussian", 300, "cs", cfg, seed=2)
    assert rl.rel_err_x < 1e-10 and rc.rel_err_x < 1e-10
    rel = np.linalg.norm(rl.x_hat - rc.x_hat) / np.linalg.norm(rl.x_hat)
    assert rel < 1e-8
    # fused setup: LSQR spends 2 reductions per iteration, CS one
    assert rl.ledger.reductions == 2 * rl.iterations
    assert rc.ledger.reductions == rc.iterations


def test_lsrn_pass_accounting_and_consistent_system(nb):
    rep = lsrn_solve(nb, 2.0, cfg=SolverConfig(evaluate=False), seed=3)
    assert rep.ledger.passes == 1 + 2 * rep.iterations
    a = nb.a
    x0 = np.random.default_rng(0).standard_normal(40)
    rep = lsrn_solve((a, a @ x0), 2.0, seed=4)
    # residual stop at 1e-14 ||b|| leaves roughly kappa(A) kappa(AN) 1e-14 in x
    assert np.linalg.norm(rep.x_hat - x0) <= 1e-7 * np.linalg.norm(x0)


@pytest.fixture(scope="module")
def nb_large():
    return gen_family("NB", 20_000, 200, seed=1)


def test_lsrn_cs_consistent_system(nb_large):
    a = nb_large.a
    x0 = np.random.default_rng(0).standard_normal(200)
    rep = lsrn_solve((a, a @ x0, x0, 0.0), 2.0, "cs", SolverConfig(raise_on_max_iters=False), seed=4)
    # the gamma=2 interval is [0.027, 0.38]; see ledger for why this misses
    assert rep.rel_err_x <= 1e-10
    assert rep.iterations <= 60


def test_lsrn_cs_and_lsqr_agree(nb_large):
    rc = lsrn_solve(nb_large, 2.0, "cs", seed=5)
    rl = lsrn_solve(nb_large, 2.0, "lsqr", seed=5)
    assert np.linalg.norm(rl.x_hat - rc.x_hat) / np.linalg.norm(rl.x_hat) <= 1e-8


def test_lsrn_kappa_bound_reported(nb):
    rep = lsrn_solve(nb, 2.0, seed=5)
    assert "kappa_bound" in rep.extra and rep.extra["preconditioner"].kind == "svd"


def test_cs_requires_finite_interval(nb):
    with pytest.raises(ValueError):
        preconditioned_solve(nb, "countsketch", 1600, "cs", seed=1)


@pytest.mark.parametrize("threads", [1, 3])
def test_thread_count_does_not_change_results(ug, threads):
    passio.set_threads(threads)
    passio.set_block_rows(700)
    rep = preconditioned_solve(ug, "gaussian", 200, "lsqr", seed=9)
    passio.set_threads(None)
    passio.set_block_rows(None)
    ref = preconditioned_solve(ug, "gaussian", 200, "lsqr", seed=9)
    assert np.array_equal(rep.x_hat, ref.x_hat)
    assert rep.to_record(True) == ref.to_record(True)


def test_lsrn_kappa_bound_holds_across_seeds():
    from sketchreg.precond import lsrn_precond, precond_quality
    inst = gen_family("NB", 3000, 200, seed=4)
    hits = 0
    for k in range(50):
        pre = lsrn_precond(inst.a, gamma=2.0, seed=k)
        hits += precond_quality(inst.a, pre) <= lsrn_kappa_bound(200, 400, lsrn_alpha(400))
    assert hits >= 48
