"""Low-precision least squares: random projection versus leverage sampling.

On a uniform-leverage matrix (UG) every method does about as well.  On a
matrix with a block of leverage-1 rows (NB), uniform sampling misses those
rows and loses rank, while leverage-score sampling keeps them.

Run:  python3 demos/01_sketch_and_solve.py
"""

from sketchreg.errors import RankDeficient
from sketchreg.matrixgen import gen_family
from sketchreg.sketch import SketchOperator
from sketchreg.solve_l2 import sample_and_solve_l2, sketch_and_solve_l2

M, N, S = 20_000, 50, 1000


def run(label, fn):
    try:
        rep = fn()
        print(f"  {label:<16} rel_err_f {rep.rel_err_f:9.2e}  rel_err_x {rep.rel_err_x:9.2e}  passes {rep.ledger.passes}")
    except RankDeficient as exc:
        print(f"  {label:<16} failed: {exc}")


for family in ("UG", "NB"):
    inst = gen_family(family, M, N, seed=1)
    print(f"{family} {M}x{N}, max leverage {inst.meta['lev_max']:.3f}, s = {S}")
    for variant in ("gaussian", "srdht", "countsketch"):
        run(f"PROJ {variant}", lambda: sketch_and_solve_l2(inst, SketchOperator(variant, S, M, 7)))
    run("SAMP approx", lambda: sample_and_solve_l2(inst, "approx", S, seed=7))
    run("SAMP uniform", lambda: sample_and_solve_l2(inst, "uniform", S, seed=7))
