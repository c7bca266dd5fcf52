"""The command-line workflow on an on-disk matrix.

Generates an instance into .rnla files, solves it with the streaming
solvers through the CLI, and runs a small benchmark plan whose CSV can be
regenerated from the JSON-lines records.

Run:  python3 demos/04_streaming_cli.py
"""

import json
import tempfile
from pathlib import Path

from sketchreg.cli import main

with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    a, b, meta = d / "A.rnla", d / "b.rnla", d / "meta.json"
    main(["--seed", "3", "gen", "--family", "NB", "--m", "20000", "--n", "50",
          "--out", str(a), "--rhs", str(b), "--meta", str(meta)])
    for method in ("sketch", "samp-appr", "lsqr", "cs", "lsrn"):
        rep = d / f"{method}.json"
        main(["--seed", "1", "--deterministic", "solve-l2", "--method", method, "--s", "500",
              "--in", str(a), "--rhs", str(b), "--meta", str(meta), "--report", str(rep)])
        r = json.loads(rep.read_text())
        print(f"  {method:<10} iters {r['iters']:3d}  passes {r['passes']:3d}  reductions {r['reductions']:3d}  "
              f"rel_err_f {r['rel_err_f']:.2e}")
    main(["--seed", "2", "--deterministic", "bench", "--plan", "fig3", "--m", "2000", "--d", "10",
          "--trials", "1", "--out", str(d / "bench")])
    print((d / "bench" / "fig3_error-vs-embedding-dimension.csv").read_text().splitlines()[0])
