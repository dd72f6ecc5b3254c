"""Sobol low-discrepancy points in natural (non-Gray-code) order.

Backed by :class:`scipy.stats.qmc.Sobol` (Joe-Kuo direction numbers). SciPy
emits points in Gray-code order starting at the origin; we re-index to the
natural order and skip index 0, so the unscrambled 1-D sequence starts
0.5, 0.25, 0.75, 0.125, ...
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

MAX_DIM = 21201


class UnsupportedDimensionError(ValueError):
    pass


def _inverse_gray(i: np.ndarray) -> np.ndarray:
    k = i.copy()
    shift = i >> 1
    while np.any(shift):
        k ^= shift
        shift >>= 1
    return k


def sobol_points(dim: int, n: int, seed=None, scramble=None) -> np.ndarray:
    """Return ``n`` Sobol points in ``[0, 1]^dim``, shape ``(n, dim)``.

    Parameters
    ----------
    dim, n : int
        Both must be >= 1.
    seed : int, SeedSequence, Generator or None
        Scrambling seed. ``None`` (with ``scramble`` unset) gives the plain
        deterministic sequence.
    scramble : bool, optional
        Defaults to ``seed is not None``.
    """
    if dim < 1 or n < 1:
        raise ValueError(f"need dim >= 1 and n >= 1, got dim={dim}, n={n}")
    if dim > MAX_DIM:
        raise UnsupportedDimensionError(f"Sobol direction numbers cover at most {MAX_DIM} dimensions")
    if scramble is None:
        scramble = seed is not None
    if isinstance(seed, np.random.SeedSequence):
        seed = np.random.default_rng(seed)
    m = int(n).bit_length()  # 2**m > n, covers natural indices 1..n
    engine = qmc.Sobol(dim, scramble=scramble, seed=seed)
    gray_ordered = engine.random_base2(m)
    idx = _inverse_gray(np.arange(1, n + 1, dtype=np.int64))
    return gray_ordered[idx]
