"""Counter-based Gaussian streams keyed by (seed, stream, sample index).

Sample ``i`` of stream ``s`` under seed ``k`` draws its normals from
``Generator(Philox(key=k + (s << 64), counter=i << 64))``.  Each sample's
stream can be produced on its own, so results never depend on how samples
are scheduled across workers.

A sample with ``pairs`` coordinate pairs and ``m`` steps reads its normals
pair-major: pair ``j`` takes positions ``[2 j m, 2 j m + 2 m)``, x increments
first.  Pair ``j`` of a sample is therefore the same whatever the total
number of pairs.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def philox_key(seed, stream):
    return (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)


def sample_generator(seed, stream, index):
    """The generator owning sample ``index``; mostly useful for tests."""
    bg = np.random.Philox(key=philox_key(seed, stream), counter=int(index) << 64)
    return np.random.Generator(bg)


def normals(seed, stream, indices, count):
    """Shape ``(len(indices), count)``: the first ``count`` normals of each sample."""
    indices = np.asarray(indices, dtype=np.int64).ravel()
    out = np.empty((indices.size, count))
    bg = np.random.Philox(key=philox_key(seed, stream))
    gen = np.random.Generator(bg)
    state = bg.state
    for row, i in enumerate(indices.tolist()):
        # rewinding one generator is cheaper than building one per sample
        state["state"]["counter"][:] = (0, i, 0, 0)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bg.state = state
        gen.standard_normal(out=out[row])
    return out


def planar_pairs(seed, stream, indices, pairs, steps):
    """Standard normals of shape ``(len(indices), pairs, 2, steps)``.

    ``[:, j, 0]`` / ``[:, j, 1]`` are the x / y increments of pair ``j``.
    """
    g = normals(seed, stream, indices, 2 * pairs * steps)
    return g.reshape(len(g), pairs, 2, steps)
