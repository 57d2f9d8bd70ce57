"""Fully implicit Runge-Kutta timestepping for the rotating shallow water equations on the sphere."""

from .forms import ShallowWater, SWEParams, State
from .harness import ExperimentConfig, ResultRow, run_experiment
from .irk import NewtonConfig, NonConvergence, SolveStats, irk_step, newton_solve
from .mesh import build_hierarchy, build_icosahedron
from .tableaux import ark2, gauss_legendre, get_tableau, radau_iia

__version__ = "0.1.0"
