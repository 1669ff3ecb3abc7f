"""Reproducible Brownian increments from a counter-based generator.

The increment for path i at step k is draw number ``i * n_steps + k`` of the
raw Philox-4x64 stream keyed by the seed.  Each raw 64-bit word is mapped to
a uniform in (0, 1) via ``u = ((raw >> 11) + 0.5) * 2**-53`` and then through
the Gaussian inverse CDF (``scipy.special.ndtri``), scaled by sqrt(dt).  Both
maps are fully deterministic rational/integer arithmetic, so ensembles are
bit-identical across runs, chunkings, worker counts and platforms.

Because draws are addressed by counter, any contiguous block of paths can be
produced without generating the rest of the stream (``sample_noise_block``),
which keeps large Monte-Carlo runs memory-lean without changing a single bit.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .timegrid import TimeGrid

_U64_MAX = 2**64


@dataclass(frozen=True)
class NoiseEnsemble:
    """Per-path, per-step Gaussian increments with variance dt."""

    grid: TimeGrid
    seed: int
    n_paths: int
    increments: np.ndarray  # shape (n_paths, n_steps)
    path_offset: int = 0  # index of the first path within the seed's stream

    def __post_init__(self):
        if self.increments.shape != (self.n_paths, self.grid.n_steps):
            raise ValueError(
                f"increments shape {self.increments.shape} does not match "
                f"(n_paths={self.n_paths}, n_steps={self.grid.n_steps})"
            )
        self.increments.flags.writeable = False

    def coarsened(self, factor: int) -> "NoiseEnsemble":
        """Same Brownian paths observed on a grid coarsened by ``factor``.

        Adjacent increments are summed in groups of ``factor``; useful for
        step-refinement studies where the driving noise must be held fixed.
        """
        if factor < 1 or self.grid.n_steps % factor != 0:
            raise ValueError(
                f"factor {factor} must divide n_steps {self.grid.n_steps}"
            )
        if factor == 1:
            return self
        n_coarse = self.grid.n_steps // factor
        coarse = self.increments.reshape(self.n_paths, n_coarse, factor).sum(axis=2)
        return NoiseEnsemble(
            grid=TimeGrid(self.grid.t_end, n_coarse),
            seed=self.seed,
            n_paths=self.n_paths,
            increments=coarse,
            path_offset=self.path_offset,
        )


def _raw_stream(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Raw draws [offset, offset + n) of the Philox stream keyed by ``seed``.

    Philox advances its 256-bit counter in blocks of four 64-bit outputs, so
    the offset is split into whole blocks plus a discarded remainder.
    """
    bitgen = np.random.Philox(key=seed)
    skip = offset % 4
    bitgen.advance(offset // 4)
    raw = bitgen.random_raw(skip + n)
    return raw[skip:]


def _gaussian_draws(seed: int, n: int, offset: int = 0) -> np.ndarray:
    raw = _raw_stream(seed, n, offset)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def sample_noise(grid: TimeGrid, n_paths: int, seed: int) -> NoiseEnsemble:
    """Draw the full (n_paths, n_steps) increment array for a seed."""
    return sample_noise_block(grid, n_paths, seed, 0, n_paths)


def sample_noise_block(
    grid: TimeGrid, n_paths: int, seed: int, path_start: int, path_stop: int
) -> NoiseEnsemble:
    """Increments for paths [path_start, path_stop) of the same stream.

    Concatenating blocks reproduces ``sample_noise(grid, n_paths, seed)``
    bit for bit regardless of how the path range is partitioned.
    """
    seed = _check_seed(seed)
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if not 0 <= path_start < path_stop <= n_paths:
        raise ValueError(
            f"invalid path block [{path_start}, {path_stop}) for n_paths={n_paths}"
        )
    n_block = path_stop - path_start
    n_steps = grid.n_steps
    z = _gaussian_draws(seed, n_block * n_steps, offset=path_start * n_steps)
    increments = z.reshape(n_block, n_steps) * np.sqrt(grid.dt)
    return NoiseEnsemble(
        grid=grid,
        seed=seed,
        n_paths=n_block,
        increments=increments,
        path_offset=path_start,
    )
