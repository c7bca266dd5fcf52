"""Experiment plans, their execution and report files.

A plan is a grid of cells ``(family, d, repnum, method, s)``; every cell
runs ``trials`` independent trials on a shared instance, each trial on its
own derived seed.  Results go to one JSON-lines file (a header record, then
one record per trial) and one CSV per figure panel holding the per-cell
medians.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import SketchRegError
from .matrixgen import FAMILIES, gen_family, stack
from .randstream import as_seedspec
from .sketch import SketchOperator
from .solve_l2 import (SolverConfig, lsrn_solve, plain_lsqr, preconditioned_solve, sample_and_solve_l2,
                       sketch_and_solve_l2)

SCHEMA_VERSION = 1

LOW_PRECISION = {
    "PROJ CW": ("proj", "countsketch"),
    "PROJ GAUSSIAN": ("proj", "gaussian"),
    "PROJ RADEMACHER": ("proj", "rademacher"),
    "PROJ SRDHT": ("proj", "srdht"),
    "SAMP APPR": ("samp", "approx"),
    "SAMP UNIF": ("samp", "uniform"),
}
HIGH_PRECISION = ("LSQR", "PRE GAUSSIAN LSQR", "PRE GAUSSIAN CS", "LSRN LSQR", "LSRN CS")
METHODS = tuple(LOW_PRECISION) + HIGH_PRECISION

PANELS = {
    "s": "error-vs-embedding-dimension",
    "m": "error-vs-n",
    "d": "error-vs-d",
    "iteration": "error-vs-iteration",
}
RECORD_COLUMNS = ("plan", "panel", "cell", "trial", "family", "method", "m", "n", "s", "repnum",
                  "seed", "stream_id", "status", "error", "iters", "passes", "reductions",
                  "rel_err_f", "rel_err_x", "wall_ms")
SUMMARY_COLUMNS = ("panel", "family", "method", "m", "n", "s", "repnum", "x", "trials", "ok",
                   "rel_err_f", "rel_err_x", "wall_ms", "passes", "reductions")
ITERATION_COLUMNS = ("panel", "family", "method", "m", "n", "s", "trial", "iteration", "rel_err_x")


@dataclass
class ExperimentPlan:
    """Grid of experiment cells.

    ``m`` is the row count of the base instance; stacked cells have
    ``m * repnum`` rows.  ``s_grid`` entries are absolute embedding
    dimensions, or multiples of ``d`` when ``s_relative`` is True.  ``sweep``
    names the x axis of the plan's panel (``s``, ``m``, ``d`` or
    ``iteration``).
    """

    name: str
    families: tuple = FAMILIES
    methods: tuple = tuple(LOW_PRECISION)
    m: int = 20000
    d_grid: tuple = (100,)
    s_grid: tuple = (10, 20, 50)
    s_relative: bool = True
    repnum_grid: tuple = (1,)
    stack_mode: str = "STACK1"
    trials: int = 3
    sweep: str = "s"
    master_seed: int = 20160101
    max_iters: int = 100
    metrics: tuple = ("rel_err_f", "rel_err_x", "wall_ms", "passes", "reductions")

    def __post_init__(self):
        bad = [mt for mt in self.methods if mt not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if self.sweep not in PANELS:
            raise ValueError(f"sweep must be one of {tuple(PANELS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @property
    def panel(self) -> str:
        return PANELS[self.sweep]

    def cells(self) -> list:
        out = []
        for fam in self.families:
            for d in self.d_grid:
                for rep in self.repnum_grid:
                    for method in self.methods:
                        for s in self.s_grid:
                            out.append({"family": fam, "d": int(d), "repnum": int(rep), "method": method,
                                        "s": int(s * d if self.s_relative else s)})
        return out


def fig3_plan(m: int = 20000, d: int = 100, s_factors=(10, 20, 50), trials: int = 3, **kw) -> ExperimentPlan:
    """Error versus embedding dimension for all four families and six methods."""
    return ExperimentPlan("fig3", m=m, d_grid=(d,), s_grid=tuple(s_factors), trials=trials, sweep="s", **kw)


def fig5_plan(m: int = 2000, d: int = 50, repnums=(1, 2, 5, 10), s_grid=(250, 2500), trials: int = 3,
              **kw) -> ExperimentPlan:
    """Error versus row count: an NB base instance stacked ``repnum`` times with STACK1."""
    return ExperimentPlan("fig5", families=("NB",), m=m, d_grid=(d,), s_grid=tuple(s_grid), s_relative=False,
                          repnum_grid=tuple(repnums), trials=trials, sweep="m", **kw)


def fig6_plan(m: int = 500, d_grid=(10, 20, 50, 100), repnum: int = 40, s_grid=(2000, 5000), trials: int = 3,
              **kw) -> ExperimentPlan:
    """Error versus column count at fixed rows (base NB stacked 40 times, coherence 1/40)."""
    return ExperimentPlan("fig6", families=("NB",), m=m, d_grid=tuple(d_grid), s_grid=tuple(s_grid),
                          s_relative=False, repnum_grid=(repnum,), trials=trials, sweep="d", **kw)


def fig7_plan(m: int = 20000, d: int = 200, s_factor: int = 10, trials: int = 1, max_iters: int = 100,
              **kw) -> ExperimentPlan:
    """Error versus iteration for the high-precision solvers on NB."""
    return ExperimentPlan("fig7", families=("NB",), methods=HIGH_PRECISION, m=m, d_grid=(d,),
                          s_grid=(s_factor,), trials=trials, sweep="iteration", max_iters=max_iters, **kw)


PLANS = {"fig3": fig3_plan, "fig5": fig5_plan, "fig6": fig6_plan, "fig7": fig7_plan}


def _instance_seed(plan: ExperimentPlan, family: str, d: int):
    return as_seedspec(plan.master_seed).spawn(1_000_000 + 1000 * FAMILIES.index(family) + d)


def run_trial(inst, method: str, s: int, seed, max_iters: int = 100):
    """One trial of ``method`` at embedding dimension ``s``; returns a SolveReport."""
    if method in LOW_PRECISION:
        kind, which = LOW_PRECISION[method]
        if kind == "proj":
            return sketch_and_solve_l2(inst, SketchOperator(which, s, inst.a.shape[0], seed))
        return sample_and_solve_l2(inst, which, s, seed=seed)
    cfg = SolverConfig(max_iters=max_iters, raise_on_max_iters=False, tol=1e-14)
    if method == "LSQR":
        return plain_lsqr(inst, cfg)
    iterative = "cs" if method.endswith("CS") else "lsqr"
    if method.startswith("LSRN"):
        return lsrn_solve(inst, 2.0, iterative, cfg, seed)
    return preconditioned_solve(inst, "gaussian", s, iterative, cfg, seed)


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def run_cell(plan: ExperimentPlan, index: int, cell: dict, inst, deterministic: bool = False) -> list:
    records = []
    cell_seed = as_seedspec(plan.master_seed).spawn(index)
    m, n = inst.a.shape
    for trial in range(plan.trials):
        seed = cell_seed.spawn(trial)
        rec = {"plan": plan.name, "panel": plan.panel, "cell": index, "trial": trial, "family": cell["family"],
               "method": cell["method"], "m": m, "n": n, "s": cell["s"], "repnum": cell["repnum"],
               "seed": seed.master_seed, "stream_id": seed.stream_id}
        try:
            rep = run_trial(inst, cell["method"], cell["s"], seed, plan.max_iters)
        except (SketchRegError, ValueError) as exc:
            rec.update(status="failed", error=f"{type(exc).__name__}: {exc}", iters=None, passes=None,
                       reductions=None, rel_err_f=None, rel_err_x=None, wall_ms=None)
            records.append(rec)
            continue
        r = rep.to_record(deterministic)
        rec.update(status="ok", error=None, iters=r["iters"], passes=r["passes"],
                   reductions=r["reductions"], rel_err_f=r["rel_err_f"], rel_err_x=r["rel_err_x"],
                   wall_ms=r["wall_ms"])
        if plan.sweep == "iteration" and rep.error_history is not None:
            rec["error_history"] = [_clean(e) for e in np.asarray(rep.error_history)]
        records.append({k: _clean(v) for k, v in rec.items()})
    return records


def run_plan(plan: ExperimentPlan, out_dir=None, deterministic: bool = False, workers: int = 1) -> list:
    """Run every cell of ``plan``; failures are recorded per trial, never raised.

    Instances are generated once per ``(family, d, repnum)`` and shared by
    all methods.  Cells may run in a thread pool (``workers``); the record
    order is the cell order regardless.  When ``out_dir`` is given the
    report files are written there by :func:`emit_report`.
    """
    cells = plan.cells()
    insts = {}
    for c in cells:
        key = (c["family"], c["d"], c["repnum"])
        if key not in insts:
            base = gen_family(c["family"], plan.m, c["d"], _instance_seed(plan, c["family"], c["d"]))
            insts[key] = base if c["repnum"] == 1 else stack(base, c["repnum"], plan.stack_mode)

    def job(ic):
        i, c = ic
        return run_cell(plan, i, c, insts[(c["family"], c["d"], c["repnum"])], deterministic)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, enumerate(cells)))
    else:
        chunks = [job(ic) for ic in enumerate(cells)]
    records = [r for ch in chunks for r in ch]
    if out_dir is not None:
        emit_report(records, out_dir, plan)
    return records


def _median(vals):
    vals = [v for v in vals if v is not None]
    return float(np.median(vals)) if vals else None


def summarize(records, sweep: str = "s") -> list:
    """Per-cell medians over trials, in first-seen cell order."""
    groups = {}
    for r in records:
        groups.setdefault((r["plan"], r["cell"]), []).append(r)
    rows = []
    for (_, _), rs in groups.items():
        r0 = rs[0]
        ok = [r for r in rs if r["status"] == "ok"]
        x = {"s": r0["s"], "m": r0["m"], "d": r0["n"], "iteration": r0["s"]}[sweep]
        row = {k: r0[k] for k in ("panel", "family", "method", "m", "n", "s", "repnum")}
        row.update(x=x, trials=len(rs), ok=len(ok))
        for k in ("rel_err_f", "rel_err_x", "wall_ms", "passes", "reductions"):
            row[k] = _median([r[k] for r in ok])
        rows.append(row)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False, separators=(",", ":"))


def emit_report(records, out_dir, plan: ExperimentPlan | None = None, name: str | None = None) -> dict:
    """Write ``<name>.jsonl`` and one panel CSV; returns the written paths.

    File contents depend only on ``records`` and the plan, so reruns with
    deterministic records give byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    name = name or (plan.name if plan is not None else "report")
    header = {"record": "header", "schema_version": SCHEMA_VERSION, "plan": name,
              "columns": list(RECORD_COLUMNS), "summary_columns": list(SUMMARY_COLUMNS),
              "config": _plan_config(plan)}
    paths = {"jsonl": os.path.join(out_dir, f"{name}.jsonl")}
    with open(paths["jsonl"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header) + "\n")
        for r in records:
            fh.write(_dumps({"record": "trial", **r}) + "\n")
    if not records:
        return paths
    sweep = plan.sweep if plan is not None else _sweep_of(records)
    panel = PANELS[sweep]
    paths["csv"] = os.path.join(out_dir, f"{name}_{panel}.csv")
    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        if sweep == "iteration":
            fh.write(_csv_text(ITERATION_COLUMNS, _iteration_rows(records)))
        else:
            fh.write(_csv_text(SUMMARY_COLUMNS, summarize(records, sweep)))
    return paths


def _plan_config(plan):
    if plan is None:
        return None
    cfg = asdict(plan)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


def _sweep_of(records):
    inv = {v: k for k, v in PANELS.items()}
    return inv.get(records[0].get("panel"), "s")


def _iteration_rows(records):
    rows = []
    for r in records:
        for k, e in enumerate(r.get("error_history") or []):
            rows.append({"panel": r["panel"], "family": r["family"], "method": r["method"], "m": r["m"],
                         "n": r["n"], "s": r["s"], "trial": r["trial"], "iteration": k, "rel_err_x": e})
    return rows


def read_records(path) -> tuple[dict, list]:
    """``(header, trial records)`` from a JSON-lines report."""
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("record") != "header":
        raise ValueError(f"{path} has no header record")
    if lines[0].get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {lines[0].get('schema_version')}")
    recs = []
    for rec in lines[1:]:
        rec = dict(rec)
        rec.pop("record", None)
        recs.append(rec)
    return lines[0], recs
