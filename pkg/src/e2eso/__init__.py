"""End-to-end learning of decision maps for stochastic optimization.

A decision map ``m_w = p o f_w`` chains a neural feature extractor with a
prescriptor that returns feasible actions.  It can be trained toward the
posterior Bayes action, the empirical risk minimizer, or the KL
distributionally robust action.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, DataError, DivergenceError, DomainError, E2ESOError,
                     ShapeError, StaleTapeError)

__all__ = [
    "__version__", "ConfigError", "DataError", "DivergenceError", "DomainError",
    "E2ESOError", "ShapeError", "StaleTapeError",
]
