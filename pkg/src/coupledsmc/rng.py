"""Random-stream plumbing: seed derivation and the uniform-to-Gaussian map.

Every stochastic routine in the library consumes uniforms, either from a
`numpy` Generator or from a caller-supplied array, and turns them into
Gaussians through the inverse normal CDF.  Keeping that map in one place is
what makes common-random-number coupling meaningful: two models fed the same
uniforms see the same Gaussians, coordinate by coordinate.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

# Smallest uniform forwarded to ndtri; rng.random() can return exactly 0.0,
# which would map to -inf and poison downstream state.
_U_FLOOR = 1e-300


def replicate_rng(base_seed: int, *indices: int) -> np.random.Generator:
    """Independent stream keyed by (base_seed, *indices).

    The key tuple is hashed by numpy's SeedSequence, so streams for different
    replicates (or scheme/setting combinations) are independent and
    reproducible without coordination.
    """
    key = [int(base_seed)] + [int(i) for i in indices]
    return np.random.default_rng(np.random.SeedSequence(key))


def gaussians_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Map uniforms on [0, 1) to standard Gaussians via the inverse normal CDF."""
    return ndtri(np.maximum(u, _U_FLOOR))


def uniforms_from_gaussians(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`gaussians_from_uniforms` (the standard normal CDF)."""
    return ndtr(z)
