"""Variational solver and geometric-measure diagnostics for one-phase
free-boundary problems with a weight degenerating on a submanifold."""

__version__ = "0.1.0"

from .field import Grid, ScalarField
from .geometry import Manifold, ProjectionResult
from .minimizer import BoundaryRecipe, ScenarioConfig, SolveConfig, solve

__all__ = [
    "Grid", "ScalarField", "Manifold", "ProjectionResult",
    "BoundaryRecipe", "ScenarioConfig", "SolveConfig", "solve",
    "__version__",
]
