"""Data-oblivious random embeddings for l2 and l1 subspaces.

A :class:`SketchOperator` is a small immutable description (variant,
dimensions, seed).  The random matrix itself is never stored: every
application regenerates the columns belonging to each row tile from that
tile's derived stream, so applying the operator to a file, to the same data
in memory, or with a different number of threads gives the same bits.

Variants
--------
gaussian       ``s**-0.5 * G`` with i.i.d. standard normal ``G``
rademacher     ``s**-0.5 * G`` with i.i.d. random signs
srdht          ``sqrt(m/s) * R H D`` (row sample, Hartley transform, random signs)
countsketch    ``S D``: each row hashed to one bucket with a random sign
cauchy         ``(scale_c / s) * C`` with i.i.d. standard Cauchy ``C``
sparse_cauchy  ``S C``: each row hashed to one bucket, scaled by a Cauchy variate
recip_exp      ``S D``: each row hashed to one bucket, scaled by ``1/u``, ``u ~ Exp(1)``
fast_cauchy    ``4 B C H`` with ``H`` block diagonal in ``[H_t; I_t]`` blocks
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import passio
from .errors import DimensionMismatch
from .randstream import SeedSpec, as_seedspec, draw

VARIANTS = ("gaussian", "rademacher", "srdht", "countsketch", "cauchy",
            "sparse_cauchy", "recip_exp", "fast_cauchy")

ALIASES = {
    "cw": "countsketch", "count_sketch": "countsketch", "proj_cw": "countsketch",
    "srht": "srdht", "ct": "cauchy", "spct": "sparse_cauchy", "ret": "recip_exp",
    "reciprocal_exp": "recip_exp", "fct": "fast_cauchy", "gauss": "gaussian",
}

L2_VARIANTS = ("gaussian", "rademacher", "srdht", "countsketch")
L1_VARIANTS = ("cauchy", "sparse_cauchy", "recip_exp", "fast_cauchy")

# rows of a dense random block generated from one stream
_CHUNK = 4096
# stream index reserved for operator-wide randomness (SRDHT row selection)
_GLOBAL_STREAM = (1 << 63) + 7


def canonical_variant(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    key = ALIASES.get(key, key)
    if key not in VARIANTS:
        raise ValueError(f"unknown sketch variant {name!r}; choose from {VARIANTS}")
    return key


def next_pow2(k: int) -> int:
    return 1 << max(0, int(k - 1).bit_length())


@dataclass(frozen=True)
class SketchOperator:
    """An ``s x m`` random embedding, identified by variant and seed.

    Parameters
    ----------
    variant : str
        One of :data:`VARIANTS` (aliases such as ``"cw"`` or ``"spct"`` accepted).
    s : int
        Embedding dimension.
    m : int
        Number of rows of the matrices the operator applies to.
    seed : int or SeedSpec
    scale_c : float
        Cauchy scale constant (``cauchy`` only).
    t : int, optional
        Hadamard block size for ``fast_cauchy``; a power of two.  Defaults
        to ``max(16, next_pow2(s))``.
    """

    variant: str
    s: int
    m: int
    seed: SeedSpec = field(default_factory=lambda: as_seedspec(None))
    scale_c: float = 1.0
    t: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        object.__setattr__(self, "seed", as_seedspec(self.seed))
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "m", int(self.m))
        if self.s < 1 or self.m < 1:
            raise ValueError("s and m must be positive")
        if self.variant == "srdht" and self.s > self.m:
            raise ValueError("SRDHT needs s <= m")
        if self.variant == "fast_cauchy":
            t = self.t if self.t is not None else max(16, next_pow2(self.s))
            if t < 1 or t & (t - 1):
                raise ValueError("fast_cauchy block size t must be a power of two")
            object.__setattr__(self, "t", int(t))

    @property
    def shape(self):
        return (self.s, self.m)

    @property
    def tile_rows(self) -> int:
        if self.variant == "fast_cauchy":
            return max(passio.TILE_ROWS, self.t)
        return passio.TILE_ROWS

    def describe(self) -> dict:
        d = {"variant": self.variant, "s": self.s, "m": self.m,
             "seed": int(self.seed.master_seed), "stream": int(self.seed.stream_id)}
        if self.variant == "cauchy":
            d["scale_c"] = self.scale_c
        if self.variant == "fast_cauchy":
            d["t"] = self.t
        return d

    def apply(self, a, ledger=None, threads=None, scaled: bool = True) -> np.ndarray:
        return apply(self, a, ledger=ledger, threads=threads, scaled=scaled)

    def matrix(self) -> np.ndarray:
        """Materialize the ``s x m`` operator (small ``m`` only)."""
        return apply(self, np.eye(self.m))


# ------------------------------------------------------------------ helpers


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform (Sylvester order) along axis 0."""
    x = np.array(x, dtype=np.float64, copy=True)
    n = x.shape[0]
    if n & (n - 1):
        raise ValueError("fwht length must be a power of two")
    h = 1
    while h < n:
        y = x.reshape(n // (2 * h), 2, h, *x.shape[1:])
        a = y[:, 0].copy()
        y[:, 0] += y[:, 1]
        y[:, 1] = a - y[:, 1]
        h *= 2
    return x


def hartley_rows(rows: np.ndarray, cols: np.ndarray, m: int) -> np.ndarray:
    """Entries ``cas(2 pi j k / m) / sqrt(m)`` of the orthonormal Hartley matrix."""
    jk = np.multiply.outer(rows.astype(np.int64), cols.astype(np.int64)) % m
    theta = (2.0 * np.pi / m) * jk
    return (np.cos(theta) + np.sin(theta)) / math.sqrt(m)


def _srdht_selection(op: SketchOperator) -> np.ndarray:
    gen = op.seed.spawn(_GLOBAL_STREAM).generator()
    return np.sort(gen.choice(op.m, size=op.s, replace=False))


def _dense_block(op, tstream: SeedSpec, dist: str, rows: int) -> np.ndarray:
    out = np.empty((op.s, rows))
    for c, c0 in enumerate(range(0, op.s, _CHUNK)):
        c1 = min(op.s, c0 + _CHUNK)
        if dist == "normal":
            tstream.spawn(c).generator().standard_normal(out=out[c0:c1])
        else:
            out[c0:c1] = draw(tstream.spawn(c), dist, (c1 - c0, rows))
    return out


def _hash_matrix(s: int, buckets: np.ndarray, values: np.ndarray) -> sp.csr_matrix:
    k = buckets.shape[0]
    return sp.csr_matrix((values, (buckets, np.arange(k))), shape=(s, k))


def _tile_contribution(op: SketchOperator, sel):
    v = op.variant

    def f(t, r0, tile):
        rows = tile.shape[0]
        st = op.seed.spawn(t)
        if v in ("gaussian", "rademacher", "cauchy"):
            dist = {"gaussian": "normal", "rademacher": "rademacher", "cauchy": "cauchy"}[v]
            return _dense_block(op, st, dist, rows) @ tile
        if v == "srdht":
            d = draw(st, "rademacher", rows)
            return hartley_rows(sel, np.arange(r0, r0 + rows), op.m) @ (d[:, None] * tile)
        if v == "fast_cauchy":
            tt = op.t
            padded = -(-rows // tt) * tt
            y = np.zeros((padded, tile.shape[1]))
            y[:rows] = tile
            hy = fwht(y.reshape(padded // tt, tt, -1).transpose(1, 0, 2)) / math.sqrt(tt)
            hy = hy.transpose(1, 0, 2)
            stacked = np.concatenate([hy, y.reshape(padded // tt, tt, -1)], axis=1)
            stacked = stacked.reshape(2 * padded, -1)
            gen = st.generator()
            buckets = draw(gen, "uniform_index", 2 * padded, s=op.s)
            c = draw(gen, "cauchy", 2 * padded)
            return _hash_matrix(op.s, buckets, 4.0 * c) @ stacked
        gen = st.generator()
        buckets = draw(gen, "uniform_index", rows, s=op.s)
        if v == "countsketch":
            vals = draw(gen, "rademacher", rows)
        elif v == "sparse_cauchy":
            vals = draw(gen, "cauchy", rows)
        else:
            vals = 1.0 / draw(gen, "exponential", rows)
        return _hash_matrix(op.s, buckets, vals) @ tile

    return f


def tile_contribution(op: SketchOperator):
    """Per-tile map ``f(tile_index, row_start, tile) -> unscaled Phi[:, tile rows] @ tile``.

    Summing the contributions over all tiles and calling :func:`finalize`
    gives ``Phi @ A``.  Exposed so that other passes can fuse extra per-tile
    work into the same traversal.
    """
    sel = _srdht_selection(op) if op.variant == "srdht" else None
    return _tile_contribution(op, sel)


def finalize(op: SketchOperator, raw: np.ndarray) -> np.ndarray:
    """Apply the variant's global scale to a summed raw sketch (in place)."""
    if op.variant in ("gaussian", "rademacher"):
        raw *= 1.0 / math.sqrt(op.s)
    elif op.variant == "cauchy":
        raw *= op.scale_c / op.s
    elif op.variant == "srdht":
        raw *= math.sqrt(op.m / op.s)
    return raw


def sketch_flops(op: SketchOperator, rows: int, cols: int) -> float:
    if op.variant in ("gaussian", "rademacher", "cauchy", "srdht"):
        return 2.0 * op.s * rows * cols
    return 2.0 * rows * cols


def apply(op: SketchOperator, a, ledger=None, threads=None, scaled: bool = True) -> np.ndarray:
    """Compute ``Phi @ A`` in one streaming pass.

    Parameters
    ----------
    op : SketchOperator
    a : ndarray, RowBlockStream, path, or tuple of these (column-stacked)
    ledger : CostLedger, optional
        Defaults to the stream's ledger; one pass is recorded.
    scaled : bool
        If False, skip the variant's global scale factor (e.g. return
        ``G A`` rather than ``s**-0.5 G A`` for the Gaussian).

    Returns
    -------
    ndarray, shape (s, n)
    """
    stream = passio.as_stream(a)
    if stream.rows != op.m:
        raise DimensionMismatch(f"operator expects {op.m} rows, matrix has {stream.rows}")
    out = passio.sum_tiles(stream, tile_contribution(op), ledger=ledger,
                           tile_rows=op.tile_rows, threads=threads,
                           empty=np.zeros((op.s, stream.cols)),
                           flops=sketch_flops(op, stream.rows, stream.cols))
    if scaled:
        finalize(op, out)
    return np.ascontiguousarray(out)


def embedding_dim_default(variant: str, n: int, eps: float = 0.5, delta: float = 0.1,
                          m: int | None = None, c1: float = 4.0) -> int:
    """Default embedding dimension for a variant.

    ================  ==============================================================
    gaussian, rad.    ``ceil((sqrt(n) + sqrt(2 ln(2/delta)))**2 / eps**2)``
    srdht             ``ceil(14 n ln(40 m n)/eps**2 * ln(900 n ln(40 m n)/eps**2))``,
                      capped at ``m``
    countsketch       ``ceil((n**2 + n) / (eps**2 delta))``
    l1 variants       ``ceil(c1 * n * ln n)`` (at least ``n + 1``)
    ================  ==============================================================
    """
    v = canonical_variant(variant)
    if n < 1 or not 0 < eps < 1 or not 0 < delta < 1:
        raise ValueError("need n >= 1, eps and delta in (0, 1)")
    if v in ("gaussian", "rademacher"):
        return int(math.ceil((math.sqrt(n) + math.sqrt(2 * math.log(2 / delta))) ** 2 / eps**2))
    if v == "srdht":
        if m is None:
            raise ValueError("srdht default dimension needs m")
        lead = 14 * n * math.log(40 * m * n) / eps**2
        return int(min(m, math.ceil(lead * math.log(30**2 * n * math.log(40 * m * n) / eps**2))))
    if v == "countsketch":
        return int(math.ceil((n * n + n) / (eps**2 * delta)))
    return int(max(n + 1, math.ceil(c1 * n * math.log(max(n, 2)))))
