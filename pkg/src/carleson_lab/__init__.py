"""Numerical laboratory for invariant-metric function theory on the unit ball.

Exact ball geometry (pseudohyperbolic / Kobayashi distances, metric ellipsoids),
the ball's reproducing kernel and Berezin transform, operational Carleson-measure
testers, uniformly discrete sequence analytics, defining-function domains with
distance sandwich bounds, and a deterministic Monte Carlo engine, all behind an
experiment CLI (``carleson-lab``).
"""

from .errors import (
    AnalysisError,
    CarlesonLabError,
    CoverageError,
    OutsideDomainError,
    ParameterError,
    ValidationError,
)
from .integrate import EstimateWithError, MCConfig
from .reports import CheckReport

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AnalysisError",
    "CarlesonLabError",
    "CoverageError",
    "OutsideDomainError",
    "ParameterError",
    "ValidationError",
    "MCConfig",
    "EstimateWithError",
    "CheckReport",
]
