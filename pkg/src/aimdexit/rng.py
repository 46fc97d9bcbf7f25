"""Counter-based random number streams for reproducible parallel simulation.

Every variate is a pure function of ``(seed, path_index, draw_index)``:
three chained 64-bit finalizer rounds (the splitmix64 update) hash the
triple into a uniform.  Because no generator state is carried between
draws, paths can be simulated in any order, split across any number of
workers, or replayed individually, and the numbers never change.
"""

from __future__ import annotations

import numpy as np

__all__ = ["uniforms", "exponentials", "substream_seed"]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DOMAIN = np.uint64(0x8BADF00DDEADBEEF)  # separates this stream family from other uses
_INV53 = float(2.0 ** -53)


def _mix(z: np.ndarray) -> np.ndarray:
    """One splitmix64 round: add the golden-ratio increment, then finalize."""
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def substream_seed(seed: int) -> np.uint64:
    """First-stage hash of the user seed; precompute once per run."""
    with np.errstate(over="ignore"):
        return _mix(np.uint64(seed & _MASK64) ^ _DOMAIN)


def uniforms(stage0: np.uint64, path_index, draw_index) -> np.ndarray:
    """Uniforms in [0, 1) for (path, draw) counter pairs.

    ``stage0`` comes from :func:`substream_seed`; ``path_index`` and
    ``draw_index`` broadcast against each other as uint64 arrays.
    """
    with np.errstate(over="ignore"):
        path_index = np.asarray(path_index, dtype=np.uint64)
        draw_index = np.asarray(draw_index, dtype=np.uint64)
        h = _mix(_mix(stage0 ^ path_index) ^ draw_index)
        return (h >> np.uint64(11)).astype(np.float64) * _INV53


def exponentials(stage0: np.uint64, path_index, draw_index, rate: float) -> np.ndarray:
    """Exp(rate) variates for (path, draw) counter pairs.

    Inverse-transform via ``-log1p(-U)/rate`` so that U = 0 maps to 0
    rather than overflowing.
    """
    u = uniforms(stage0, path_index, draw_index)
    return -np.log1p(-u) / rate
