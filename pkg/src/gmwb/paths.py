"""Risk-neutral path generation for the fee-dragged fund growth factor.

Each step multiplies the fund by the exact lognormal factor

    R_k = exp((r - alpha - sigma**2 / 2) * dt + sigma * sqrt(dt) * xi_k)

so there is no discretisation bias in the no-withdrawal account ``Z``.

Random numbers are counter-based: paths are grouped into fixed blocks of
``BLOCK`` paths and block ``b`` draws from a Philox stream keyed on
``(seed, b)``, filling path-major.  A path's normals therefore depend only on
``(seed, path index, number of steps)``: they do not change with the total
number of paths, the fee rate, or the number of worker threads.  Reusing the
same seed across fee rates gives common random numbers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, TypeVar

import numpy as np

from .contract import MarketParams

__all__ = ["BLOCK", "TimeGrid", "PathSet", "generate", "z_path", "derive_seed", "default_threads"]

BLOCK = 4096
_CHUNK_FLOATS = 1 << 23  # ~64 MB of float64 per worker chunk
_SEED_MASK = (1 << 64) - 1

T = TypeVar("T")


def default_threads() -> int:
    """Worker cap from ``GMWB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GMWB_THREADS", "1")))
    except ValueError:
        return 1


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit child seed for sub-simulations (surface points, phases)."""
    ss = np.random.SeedSequence(entropy=seed & _SEED_MASK, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k / steps_per_year`` on ``[0, horizon]``."""

    steps_per_year: int
    horizon: float

    def __post_init__(self):
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be a positive integer")
        if not self.horizon >= 0:
            raise ValueError("horizon must be non-negative")
        n = self.steps_per_year * self.horizon
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(
                f"horizon {self.horizon} is not a whole number of steps at {self.steps_per_year}/year"
            )

    @property
    def num_steps(self) -> int:
        return int(round(self.steps_per_year * self.horizon))

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.num_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is off-grid."""
        k = t * self.steps_per_year
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)) or not 0 <= round(k) <= self.num_steps:
            raise ValueError(f"time {t} is not a grid point")
        return int(round(k))

    def tail(self, t: float) -> "TimeGrid":
        """Grid for the remaining horizon after grid time ``t``."""
        k = self.index_of(t)
        return TimeGrid(self.steps_per_year, (self.num_steps - k) / self.steps_per_year)


@dataclass(frozen=True)
class PathSet:
    """Seeded, lazily generated set of growth-factor paths.

    Nothing is stored: factors are regenerated on demand and are
    bit-identical for identical ``(seed, grid, num_paths, market, alpha)``.
    """

    market: MarketParams
    alpha: float
    grid: TimeGrid
    num_paths: int
    seed: int
    antithetic: bool = False

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be at least 1")
        if self.antithetic and self.num_paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")

    @property
    def drift(self) -> float:
        s = self.market.sigma
        return (self.market.r - self.alpha - 0.5 * s * s) * self.grid.dt

    @property
    def vol(self) -> float:
        return self.market.sigma * math.sqrt(self.grid.dt)

    @property
    def deterministic(self) -> bool:
        return self.market.sigma == 0.0

    def with_alpha(self, alpha: float) -> "PathSet":
        """Same random numbers, different fee rate."""
        return PathSet(self.market, float(alpha), self.grid, self.num_paths, self.seed, self.antithetic)

    # ------------------------------------------------------------------ chunks
    def chunk_rows(self) -> int:
        rows = max(2, _CHUNK_FLOATS // max(1, self.grid.num_steps))
        return min(BLOCK, rows - rows % 2)

    def _block_chunks(self, b: int) -> Iterator[tuple[int, int, np.ndarray]]:
        n = self.grid.num_steps
        start = b * BLOCK
        stop = min(start + BLOCK, self.num_paths)
        step = self.chunk_rows()
        if self.deterministic:
            # every path is identical; a single shared zero row stands in for all
            yield start, stop, np.zeros((1, n))
            return
        gen = np.random.Generator(np.random.Philox(key=[self.seed & _SEED_MASK, b]))
        for a in range(start, stop, step):
            c = min(a + step, stop)
            if self.antithetic:
                base = gen.standard_normal(((c - a) // 2, n))
                xi = np.empty((c - a, n))
                xi[0::2] = base
                xi[1::2] = -base
            else:
                xi = gen.standard_normal((c - a, n))
            yield a, c, xi

    def map_chunks(self, fn: Callable[[int, int, np.ndarray], T], threads: int | None = None) -> list[T]:
        """Apply ``fn(start, stop, normals)`` to every chunk, in path order.

        Blocks run on up to ``threads`` workers; chunk results are returned
        in path order regardless of scheduling.
        """
        nblocks = -(-self.num_paths // BLOCK)

        def run(b: int) -> list[T]:
            return [fn(a, c, xi) for a, c, xi in self._block_chunks(b)]

        threads = threads or default_threads()
        if threads <= 1 or nblocks == 1:
            per_block = [run(b) for b in range(nblocks)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_block = list(pool.map(run, range(nblocks)))
        return [r for block in per_block for r in block]

    # -------------------------------------------------------------- accessors
    def normals(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Standard normals for paths ``[start, stop)``, shape ``(paths, steps)``."""
        stop = self.num_paths if stop is None else stop
        if not 0 <= start <= stop <= self.num_paths:
            raise IndexError("path range out of bounds")
        if self.deterministic:
            return np.zeros((stop - start, self.grid.num_steps))
        out = []
        for b in range(start // BLOCK, -(-stop // BLOCK)):
            for a, c, xi in self._block_chunks(b):
                lo, hi = max(a, start), min(c, stop)
                if lo < hi:
                    out.append(xi[lo - a : hi - a])
                if c >= stop:
                    break
        if not out:
            return np.zeros((0, self.grid.num_steps))
        return np.concatenate(out, axis=0)

    def growth_factors(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return np.exp(self.drift + self.vol * self.normals(start, stop))

    def export(self, path: str | Path) -> None:
        """Write growth factors as raw little-endian float64, path-major."""
        with open(path, "wb") as fh:
            for a, c, xi in (ch for b in range(-(-self.num_paths // BLOCK)) for ch in self._block_chunks(b)):
                xi = np.broadcast_to(xi, (c - a, xi.shape[1]))
                np.exp(self.drift + self.vol * xi).astype("<f8").tofile(fh)


def generate(
    market: MarketParams,
    alpha: float,
    grid: TimeGrid,
    num_paths: int,
    seed: int,
    antithetic: bool = False,
) -> PathSet:
    return PathSet(market, float(alpha), grid, int(num_paths), int(seed), bool(antithetic))


def z_path(paths: PathSet, j: int) -> np.ndarray:
    """No-withdrawal account ``Z`` along path ``j`` with ``Z_0 = 1``."""
    if not 0 <= j < paths.num_paths:
        raise IndexError(f"path index {j} out of range")
    z = np.empty(paths.grid.num_steps + 1)
    z[0] = 1.0
    np.cumprod(paths.growth_factors(j, j + 1)[0], out=z[1:])
    return z
