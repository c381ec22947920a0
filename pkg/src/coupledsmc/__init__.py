"""Coupled sequential Monte Carlo: particle filters whose resampling steps
draw ancestor pairs from a coupling of the two weight vectors (independent,
maximal, or entropic optimal transport with an optional sparse
nearest-neighbour truncation), plus the estimators built on top of them."""

from .errors import (
    DegenerateChainError,
    DegenerateWeightsError,
    InfeasibleSupportError,
    ParticleCollapseError,
    RegularizationError,
)
from .simplex import (
    Coupling,
    ess,
    independent_coupling,
    maximal_coupling,
    normalize,
    tv_distance,
)
from .transport import SinkhornConfig, exact_ot_small, sinkhorn, sparse_cost, sparse_sinkhorn
from .neighbours import KdTree, build_kdtree, knn_brute_force, symmetric_knn_support
from .resampling import (
    AncestorPair,
    entry_ordering,
    multinomial_ancestors,
    multinomial_resample,
    systematic_ancestors,
    systematic_resample,
)

__version__ = "0.1.0"

__all__ = [
    "AncestorPair",
    "Coupling",
    "DegenerateChainError",
    "DegenerateWeightsError",
    "InfeasibleSupportError",
    "KdTree",
    "ParticleCollapseError",
    "RegularizationError",
    "SinkhornConfig",
    "build_kdtree",
    "entry_ordering",
    "ess",
    "exact_ot_small",
    "independent_coupling",
    "knn_brute_force",
    "maximal_coupling",
    "multinomial_ancestors",
    "multinomial_resample",
    "normalize",
    "sinkhorn",
    "sparse_cost",
    "sparse_sinkhorn",
    "symmetric_knn_support",
    "systematic_ancestors",
    "systematic_resample",
    "tv_distance",
]
