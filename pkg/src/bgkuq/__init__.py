"""Uncertainty quantification for the 1D reduced BGK equation.

A numpy library implementing a deterministic kinetic solver (IMEX-RK time
stepping, MUSCL finite-volume transport, discrete-Maxwellian relaxation)
together with Monte Carlo, multilevel Monte Carlo and control-variate
MLMC estimators of the macroscopic field statistics, plus reference
machinery (stochastic collocation, exact Euler Riemann solution) and the
error functionals used to assess them.
"""
from ._version import __version__

from .quadrature import VelocityGrid, build_gauss_legendre, bracket
from .maxwellian import (
    Moments,
    MaxwellParams,
    NewtonSettings,
    moments_from_state,
    continuous_maxwellian_pair,
    eval_maxwellian_pair,
    solve_discrete_maxwellian,
)
from .solver import (
    SpatialMesh,
    KineticState,
    Boundary,
    BoundarySpec,
    ImexTableau,
    TABLEAUX,
    SolverConfig,
    imex_step,
    solve_to_time,
)
from .random_inputs import SCENARIOS, Scenario, get_scenario, draw_z, initial_state, boundary_for
