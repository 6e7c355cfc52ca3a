"""Numerical toolkit for the isotropic L_p dual Minkowski problem on S^2."""

__version__ = "0.1.0"

from .body import SupportFunction, compute_geometry, make_ball, make_random_body  # noqa: E402
from .solver import SolverConfig, Status, solve  # noqa: E402
from .sphere_grid import build_grid  # noqa: E402

__all__ = ["SolverConfig", "Status", "SupportFunction", "build_grid", "compute_geometry",
           "make_ball", "make_random_body", "solve", "__version__"]
