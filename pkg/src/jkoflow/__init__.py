"""Structure-preserving minimizing-movement solver for degenerate
fourth-order gradient flows of the form ``u_t = -div(m(u) D(Lap u - G'(u)))``
on an interval with no-flux boundary conditions."""

__version__ = "0.1.0"

from .grid import Density, Grid  # noqa: E402
from .jko import JkoConfig, Trajectory, jko_step, run  # noqa: E402
from .metric import MetricBackend, NewtonOptions, distance_dynamic  # noqa: E402
from .physics import ProblemSpec, cahn_hilliard, thin_film  # noqa: E402

__all__ = [
    "Density", "Grid", "JkoConfig", "Trajectory", "jko_step", "run",
    "MetricBackend", "NewtonOptions", "distance_dynamic",
    "ProblemSpec", "cahn_hilliard", "thin_film",
]
