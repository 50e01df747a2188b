"""chdg: structure-preserving mixed discontinuous Galerkin solver for the
Cahn-Hilliard equation with upwind advection, TR-BDF2 adaptive implicit time
stepping and Schur-complement block preconditioning."""

__version__ = "0.1.0"

from .mesh import Mesh, build_structured, perturb
from .spaces import DGSpace, Field, HdivSpace, interpolate
from .chcore import (CHOperators, CHParams, CHStageSystem, SolverConfig,
                     StageContext, StageState)
from .timeloop import Controller, advance, dirk_step, trbdf2_tableau
from .cases import CaseSetup, build_run, make_case

__all__ = [
    "Mesh", "build_structured", "perturb",
    "DGSpace", "HdivSpace", "Field", "interpolate",
    "CHOperators", "CHParams", "CHStageSystem", "SolverConfig",
    "StageContext", "StageState",
    "Controller", "advance", "dirk_step", "trbdf2_tableau",
    "CaseSetup", "build_run", "make_case",
    "__version__",
]
