import math

import numpy as np
import pytest

from sketchreg import passio
from sketchreg.errors import IllegalStack
from sketchreg.leverage import exact_leverage
from sketchreg.linalg import cond2
from sketchreg.matrixgen import (calibrate_alpha, gen_family, gen_nonuniform, gen_uniform, solve_exact, stack,
                                 write_instance)


def test_uniform_family_condition_and_optimum():
    inst = gen_uniform(3000, 20, 1e6, seed=1)
    assert inst.family == "UB"
    assert cond2(inst.a) == pytest.approx(1e6, rel=1e-8)
    grad = inst.a.T @ (inst.a @ inst.x_star - inst.b)
    assert np.linalg.norm(grad) < 1e-8 * np.linalg.norm(inst.a.T @ inst.b)
    assert inst.f_star == pytest.approx(np.linalg.norm(inst.a @ inst.x_star - inst.b))
    # leverage is near-uniform for random orthonormal factors
    assert inst.meta["lev_max"] < 5 * 20 / 3000


def test_nonuniform_family_condition_and_leverage():
    inst = gen_family("NB", 4000, 40, seed=2)
    assert inst.family == "NB"
    assert cond2(inst.a) == pytest.approx(1e6, rel=1e-6)
    lev = exact_leverage(inst.a).scores
    np.testing.assert_allclose(lev[-20:], 1.0, atol=1e-12)
    assert inst.meta["n_identity"] == 20
    assert lev[:-20].max() < 0.05


def test_good_families_use_small_kappa():
    assert cond2(gen_family("NG", 2000, 10, seed=3).a) == pytest.approx(5.0, rel=1e-6)
    assert cond2(gen_family("UG", 2000, 10, seed=3).a) == pytest.approx(5.0, rel=1e-8)


def test_calibrate_alpha_with_custom_function():
    b = np.random.default_rng(0).standard_normal((200, 5))
    alpha = calibrate_alpha(b, 50.0, fn=lambda al: 2.0 * al)
    assert alpha == pytest.approx(25.0, rel=1e-8)
    with pytest.raises(ValueError):
        calibrate_alpha(b, 0.5)


def test_mass_fraction_matches_projection():
    inst = gen_uniform(1000, 8, 10, seed=4)
    q, _ = np.linalg.qr(inst.a)
    assert inst.mass_fraction == pytest.approx(np.linalg.norm(q.T @ inst.b) / np.linalg.norm(inst.b))
    # noise at 25% of ||Ax|| puts most of b inside the range
    assert 0.9 < inst.mass_fraction < 1.0


def test_generator_is_deterministic():
    a = gen_family("NB", 500, 10, seed=9)
    b = gen_family("NB", 500, 10, seed=9)
    assert np.array_equal(a.a, b.a) and np.array_equal(a.b, b.b)
    assert not np.array_equal(a.b, gen_family("NB", 500, 10, seed=10).b)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        gen_family("XX", 100, 4)
    with pytest.raises(ValueError):
        gen_nonuniform(100, 5, alpha=1.0)
    with pytest.raises(ValueError):
        gen_nonuniform(100, 4)
    with pytest.raises(ValueError):
        gen_uniform(3, 4, 2.0)


@pytest.mark.parametrize("norm", ["l2", "l1"])
def test_stack1_keeps_optimum_and_divides_leverage(norm):
    base = gen_family("NB", 600, 8, seed=5, norm=norm)
    st = stack(base, 4, "STACK1")
    assert st.a.shape == (2400, 8) and st.stack_mode == "STACK1"
    np.testing.assert_array_equal(st.x_star, base.x_star)
    factor = 4 if norm == "l1" else 2
    assert st.f_star == pytest.approx(factor * base.f_star)
    assert st.objective(st.x_star) == pytest.approx(st.f_star, rel=1e-10)
    assert exact_leverage(st.a).coherence == pytest.approx(0.25)


@pytest.mark.parametrize("norm", ["l2", "l1"])
def test_stack2_keeps_coherence_and_recomputes_optimum(norm):
    base = gen_family("NB", 600, 8, seed=6, norm=norm)
    st = stack(base, 3, "STACK2")
    assert st.a.shape == (3 * 596 + 4, 8)
    assert exact_leverage(st.a).coherence == pytest.approx(1.0)
    # oracle: solve the stacked problem directly
    x = solve_exact(st.a, st.b, norm)
    assert st.objective(x) == pytest.approx(st.f_star, rel=1e-7)
    assert st.objective(st.x_star) == pytest.approx(st.f_star, rel=1e-9)


def test_illegal_stacks():
    ug = gen_family("UG", 200, 4, seed=1)
    with pytest.raises(IllegalStack):
        stack(ug, 2, "STACK2")
    with pytest.raises(IllegalStack):
        stack(stack(ug, 2, "STACK1"), 2, "STACK1")
    with pytest.raises(ValueError):
        stack(ug, 0)


@pytest.mark.parametrize("ext", ["rnla", "csv"])
def test_write_instance_streams_stacked_rows(tmp_path, ext):
    base = gen_family("NB", 300, 6, seed=8)
    pa, pb = tmp_path / f"a.{ext}", tmp_path / f"b.{ext}"
    x, f = write_instance(base, pa, pb, repnum=3, mode="STACK2")
    st = stack(base, 3, "STACK2")
    np.testing.assert_array_equal(passio.load_matrix(pa), st.a)
    np.testing.assert_array_equal(passio.load_matrix(pb).ravel(), st.b)
    assert f == pytest.approx(st.f_star)
    x0, f0 = write_instance(base, tmp_path / "c.rnla")
    assert f0 == base.f_star and passio.read_rnla_header(tmp_path / "c.rnla") == (300, 6)


def test_l1_instance_optimum_is_lp_optimal():
    inst = gen_family("UG", 300, 4, seed=2, norm="l1")
    assert inst.norm == "l1"
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = inst.x_star + 1e-3 * rng.standard_normal(4)
        assert inst.objective(x) >= inst.f_star - 1e-9
    assert math.isfinite(inst.f_star)
