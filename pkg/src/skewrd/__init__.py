"""SIPG discontinuous Galerkin and average-vector-field solvers for
skew-gradient FitzHugh-Nagumo systems, with POD-DEIM reduced models."""

from .dgspace import DgSpace
from .diagnostics import EnergyRecorder, EnergyTrace, discrete_energy, energy_increment_residual
from .errors import (DomainError, InvalidArgumentError, LinearSolverError, NumericalFailureError,
                     RankDeficiencyError, SelectionFailureError, SkewRDError, StepFailureError)
from .integrator import AVFStepper, NewtonConfig, State, TimeGrid, avf_step, run_simulation
from .kinetics import ThreeComponentModel, TwoComponentModel
from .mesh import Mesh, build_interval_mesh, build_triangular_mesh

__version__ = "0.1.0"

__all__ = [
    "DgSpace", "EnergyRecorder", "EnergyTrace", "discrete_energy", "energy_increment_residual",
    "DomainError", "InvalidArgumentError", "LinearSolverError", "NumericalFailureError",
    "RankDeficiencyError", "SelectionFailureError", "SkewRDError", "StepFailureError",
    "AVFStepper", "NewtonConfig", "State", "TimeGrid", "avf_step", "run_simulation",
    "ThreeComponentModel", "TwoComponentModel", "Mesh", "build_interval_mesh", "build_triangular_mesh",
    "__version__",
]
