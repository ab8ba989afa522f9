"""Reproducible Gaussian substreams for Monte-Carlo paths.

Trajectories are cut into fixed blocks of ``BLOCK`` paths.  Every
``(block, coordinate)`` pair owns an independent counter-based Philox
stream keyed from the master seed.  Within a stream each path draws a
contiguous run of numbers, so a trajectory's noise depends only on the
seed and its index, never on the total path count or on how work is
split across threads.
"""

from __future__ import annotations

import numpy as np

BLOCK = 256


def n_blocks(n_paths: int) -> int:
    return -(-n_paths // BLOCK)


def block_slice(block: int, n_paths: int) -> slice:
    return slice(block * BLOCK, min((block + 1) * BLOCK, n_paths))


def substream(seed: int, block: int, coord: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(block, coord))
    return np.random.Generator(np.random.Philox(ss))


def block_normals(seed: int, block: int, size: int, n_steps: int, n_coords: int) -> np.ndarray:
    """Standard normals of shape ``(n_steps, size, n_coords)`` for one block."""
    z = np.empty((n_steps, size, n_coords))
    for c in range(n_coords):
        # path-major draws: a path's numbers do not depend on the block's fill
        z[:, :, c] = substream(seed, block, c).standard_normal((size, n_steps)).T
    return z


def brownian_normals(seed: int, n_paths: int, n_steps: int, n_coords: int) -> np.ndarray:
    """All normals for a run, shape ``(n_steps, n_paths, n_coords)``.

    Holding on to this array and passing it back to the simulators gives
    common random numbers across repeated simulations.
    """
    z = np.empty((n_steps, n_paths, n_coords))
    for b in range(n_blocks(n_paths)):
        sl = block_slice(b, n_paths)
        z[:, sl] = block_normals(seed, b, sl.stop - sl.start, n_steps, n_coords)
    z.flags.writeable = False
    return z
