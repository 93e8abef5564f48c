"""Self-similar quenching for the wave equation u_tt = Laplacian(u) - 1/u^2."""

from .similarity import C_STAR, OdeState, SimilarityConstants, constants

__version__ = "0.1.0"

__all__ = ["C_STAR", "OdeState", "SimilarityConstants", "constants", "__version__"]
