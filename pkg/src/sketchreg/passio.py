"""Row-block streaming over on-disk or in-memory matrices, with pass accounting.

The streaming executor stands in for a distributed backend.  A matrix is
split into fixed *tiles* of :data:`TILE_ROWS` rows; tiles are the unit of
work, random-stream derivation and floating-point combination.  The
``block_rows`` setting only controls how many tiles are grouped into one
task for the worker pool, so no numerical result depends on it or on the
thread count.

Partial results are combined with a fixed binary tree over tile indices
(a binary-counter stack), which keeps at most ``O(log T)`` partials alive.
"""

from __future__ import annotations

import os
import struct
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

MAGIC = b"RNLA"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")
TILE_ROWS = 512
DEFAULT_BLOCK_ROWS = 8192
ENV_THREADS = "SKETCHREG_THREADS"


# --------------------------------------------------------------------- files


def write_rnla(path, a) -> None:
    """Write a matrix (or vector, stored as one column) in RNLA format."""
    a = np.asarray(a, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, rows, cols))
        # write in slabs so memmapped inputs are never fully materialized
        step = max(1, (1 << 24) // max(cols, 1))
        for i in range(0, rows, step):
            fh.write(np.ascontiguousarray(a[i : i + step]).tobytes())


def read_rnla_header(path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated RNLA header")
    magic, version, rows, cols = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported RNLA version {version}")
    expected = HEADER.size + 8 * rows * cols
    actual = os.path.getsize(path)
    if actual != expected:
        raise ValueError(f"{path}: size {actual} does not match header ({expected})")
    return rows, cols


def read_rnla(path, mmap: bool = True) -> np.ndarray:
    """Open an RNLA file as a read-only (memory-mapped) ``rows x cols`` array."""
    rows, cols = read_rnla_header(path)
    if rows * cols == 0:
        return np.zeros((rows, cols))
    if mmap:
        return np.memmap(path, dtype="<f8", mode="r", offset=HEADER.size, shape=(rows, cols))
    with open(path, "rb") as fh:
        fh.seek(HEADER.size)
        return np.fromfile(fh, dtype="<f8", count=rows * cols).reshape(rows, cols)


def write_csv(path, a) -> None:
    a = np.asarray(a, dtype=np.float64)
    np.savetxt(path, a if a.ndim == 2 else a[:, None], delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)


def load_matrix(path, mmap: bool = True) -> np.ndarray:
    """Load ``.rnla`` or ``.csv`` by extension."""
    if str(path).lower().endswith(".csv"):
        return read_csv(path)
    return read_rnla(path, mmap=mmap)


def save_matrix(path, a) -> None:
    if str(path).lower().endswith(".csv"):
        write_csv(path, a)
    else:
        write_rnla(path, a)


# ------------------------------------------------------------------ ledger


@dataclass
class CostLedger:
    """Pass and synchronization counters.  Only the orchestrating thread writes."""

    passes: int = 0
    reductions: int = 0
    flops_estimate: float = 0.0

    def record_pass(self, flops: float = 0.0) -> "CostLedger":
        self.passes += 1
        self.flops_estimate += float(flops)
        return self

    def record_reduction(self, count: int = 1) -> "CostLedger":
        self.reductions += int(count)
        return self

    def snapshot(self) -> "CostLedger":
        return CostLedger(self.passes, self.reductions, self.flops_estimate)

    def as_dict(self) -> dict:
        return {"passes": self.passes, "reductions": self.reductions,
                "flops_estimate": self.flops_estimate}


def record_reduction(ledger: CostLedger) -> CostLedger:
    """Count one cluster-wide reduction (an allreduce of a dot product or norm)."""
    return ledger.record_reduction(1)


# ----------------------------------------------------------------- threads

_threads: int | None = None


def set_threads(n: int | None) -> None:
    """Set the worker count for block-parallel passes (None: use the environment)."""
    global _threads
    _threads = None if n is None else max(1, int(n))


def get_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get(ENV_THREADS)
    return max(1, int(env)) if env else 1


def set_block_rows(n: int | None) -> None:
    """Set the rows per worker task for new streams (None restores 8192).

    Only the task grouping changes; results do not depend on it.
    """
    global DEFAULT_BLOCK_ROWS
    DEFAULT_BLOCK_ROWS = 8192 if n is None else max(1, int(n))


# ------------------------------------------------------------------ stream


class RowBlockStream:
    """Row-ordered access to a matrix that may live on disk.

    Parameters
    ----------
    source : ndarray, memmap, path, or tuple of these
        A tuple is treated as a column concatenation, e.g. ``(A, b)``
        streams ``[A b]`` without forming it.
    block_rows : int
        Rows per worker task (rounded up to whole tiles).
    ledger : CostLedger, optional
        Receives one pass per full traversal.
    """

    def __init__(self, source, block_rows: int | None = None, ledger: CostLedger | None = None):
        parts = source if isinstance(source, tuple) else (source,)
        arrays = []
        for p in parts:
            if isinstance(p, RowBlockStream):
                arrays.extend(p._parts)
                continue
            if isinstance(p, (str, os.PathLike)):
                p = load_matrix(p)
            p = np.asarray(p) if not isinstance(p, np.ndarray) else p
            if p.ndim == 1:
                p = p[:, None]
            arrays.append(p)
        rows = {x.shape[0] for x in arrays}
        if len(rows) != 1:
            from .errors import DimensionMismatch

            raise DimensionMismatch(f"column-stacked parts have different row counts {sorted(rows)}")
        self._parts = arrays
        self.rows = arrays[0].shape[0]
        self.cols = sum(x.shape[1] for x in arrays)
        self.block_rows = max(1, int(block_rows or DEFAULT_BLOCK_ROWS))
        self.ledger = ledger if ledger is not None else CostLedger()
        self.cursor = 0

    @property
    def shape(self):
        return (self.rows, self.cols)

    def rows_slice(self, start: int, stop: int) -> np.ndarray:
        if len(self._parts) == 1:
            return np.asarray(self._parts[0][start:stop], dtype=np.float64)
        return np.hstack([np.asarray(x[start:stop], dtype=np.float64) for x in self._parts])

    def blocks(self) -> Iterator[np.ndarray]:
        """Yield consecutive row blocks of ``block_rows`` rows (no pass is counted)."""
        self.cursor = 0
        while self.cursor < self.rows:
            stop = min(self.rows, self.cursor + self.block_rows)
            blk = self.rows_slice(self.cursor, stop)
            self.cursor = stop
            yield blk

    def n_tiles(self, tile_rows: int = TILE_ROWS) -> int:
        return -(-self.rows // tile_rows)

    def to_array(self) -> np.ndarray:
        return self.rows_slice(0, self.rows)


def as_stream(a, ledger: CostLedger | None = None, block_rows: int | None = None) -> RowBlockStream:
    if isinstance(a, RowBlockStream):
        if ledger is not None:
            a.ledger = ledger
        return a
    return RowBlockStream(a, block_rows, ledger)


# ------------------------------------------------------------------- merge


class TreeReducer:
    """Combine a sequence of values with a shape fixed by the sequence length.

    Values are pushed in index order.  The tree is the one induced by a
    binary counter, so the same number of inputs always yields the same
    association pattern.
    """

    def __init__(self, combine: Callable):
        self.combine = combine
        self._stack: list[tuple[int, object]] = []

    def push(self, value) -> None:
        level = 0
        while self._stack and self._stack[-1][0] == level:
            _, left = self._stack.pop()
            value = self.combine(left, value)
            level += 1
        self._stack.append((level, value))

    def result(self, empty=None):
        if not self._stack:
            return empty
        _, acc = self._stack.pop()
        while self._stack:
            _, left = self._stack.pop()
            acc = self.combine(left, acc)
        return acc


def _tile_groups(rows: int, tile_rows: int, block_rows: int):
    per_group = max(1, -(-block_rows // tile_rows))
    n_tiles = -(-rows // tile_rows)
    for g0 in range(0, n_tiles, per_group):
        yield range(g0, min(n_tiles, g0 + per_group))


def map_tiles(stream, f: Callable, tile_rows: int = TILE_ROWS, threads: int | None = None) -> Iterator:
    """Yield ``f(tile_index, row_start, tile)`` for every tile, in tile order.

    Tiles are processed by a thread pool with a bounded window of in-flight
    tasks; results are always yielded in index order.  No pass is recorded.
    """
    stream = as_stream(stream)
    threads = threads or get_threads()

    def task(tids):
        out = []
        for t in tids:
            r0 = t * tile_rows
            tile = stream.rows_slice(r0, min(stream.rows, r0 + tile_rows))
            out.append(f(t, r0, tile))
        return out

    groups = _tile_groups(stream.rows, tile_rows, stream.block_rows)
    if threads == 1:
        for g in groups:
            yield from task(g)
        return
    window = deque()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for g in groups:
            window.append(pool.submit(task, g))
            if len(window) >= 2 * threads:
                yield from window.popleft().result()
        while window:
            yield from window.popleft().result()


def map_blocks(stream, f: Callable, combine: Callable, ledger: CostLedger | None = None,
               tile_rows: int = TILE_ROWS, threads: int | None = None, empty=None, flops: float = 0.0):
    """One pass over ``stream``: map each tile, then tree-combine the results.

    Parameters
    ----------
    f : callable
        ``f(tile_index, row_start, tile) -> accumulator``.
    combine : callable
        Associative merge ``combine(left, right)``; left always precedes right.

    Returns
    -------
    The combined accumulator (``empty`` for a matrix with no rows).
    """
    stream = as_stream(stream)
    led = ledger if ledger is not None else stream.ledger
    red = TreeReducer(combine)
    for value in map_tiles(stream, f, tile_rows=tile_rows, threads=threads):
        red.push(value)
    led.record_pass(flops)
    return red.result(empty)


def _add(x, y):
    # the left operand is always a fresh partial sum, so it can be overwritten
    if isinstance(x, np.ndarray) and isinstance(y, np.ndarray) and x.shape == y.shape and x.dtype == np.float64:
        x += y
        return x
    return x + y


def _concat(x, y):
    return np.concatenate([x, y])


def sum_tiles(stream, f: Callable, ledger=None, **kw):
    """``map_blocks`` with addition as the merge."""
    return map_blocks(stream, f, _add, ledger=ledger, **kw)


def concat_tiles(stream, f: Callable, ledger=None, **kw):
    """``map_blocks`` with row concatenation as the merge."""
    return map_blocks(stream, f, _concat, ledger=ledger, **kw)


def matvec(stream, x, ledger=None) -> np.ndarray:
    """``A @ x`` in one pass."""
    x = np.asarray(x, dtype=np.float64)
    stream = as_stream(stream)
    return concat_tiles(stream, lambda t, r0, tile: tile @ x, ledger=ledger,
                        empty=np.zeros((0,) + x.shape[1:]), flops=2.0 * stream.rows * stream.cols)


def rmatvec(stream, y, ledger=None) -> np.ndarray:
    """``A.T @ y`` in one pass; per-tile partials are tree-summed."""
    y = np.asarray(y, dtype=np.float64)
    stream = as_stream(stream)
    return sum_tiles(stream, lambda t, r0, tile: tile.T @ y[r0 : r0 + tile.shape[0]], ledger=ledger,
                     empty=np.zeros((stream.cols,) + y.shape[1:]), flops=2.0 * stream.rows * stream.cols)
