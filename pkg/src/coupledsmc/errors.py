"""Semantic exceptions shared across the library."""


class DegenerateWeightsError(ValueError):
    """All particle weights are zero (or otherwise invalid): total weight collapse."""


class RegularizationError(RuntimeError):
    """Entropic kernel underflowed to an all-zero row or column; rescale costs or lower lambda."""


class InfeasibleSupportError(ValueError):
    """A sparse transport support has an empty row or column, so no coupling exists on it."""


class ParticleCollapseError(RuntimeError):
    """Every incremental particle weight vanished at some filtering step."""


class DegenerateChainError(ValueError):
    """An MCMC chain has zero variance, so autocorrelation summaries are undefined."""
