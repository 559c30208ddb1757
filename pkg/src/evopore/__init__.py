"""Numerical toolkit for reaction-diffusion in porous media whose solid
obstacles grow and shrink with the local concentration.

The pieces: a radius-parametrized cell transformation with exact structural
identities, periodic cell problems producing the radius-dependent effective
diffusion tensor, a macroscopic PDE-ODE solver for the homogenized system,
and a resolved micro-scale simulator on the fixed perforated domain used to
verify the scale limit empirically.
"""

__version__ = "0.1.0"

from .errors import CheckFailure, ConfigError, MeshQualityError, NumericalError
from .kinetics import (KineticsSpec, eval_f, lipschitz_envelope, register_family,
                       step_radius, validate_structure)
from .macro import MacroGrid, MacroSolver, MacroState, mass_balance
from .micro import (MicroMesh, MicroSimulator, MicroState, UnfoldingError,
                    build_micro_mesh, cell_pore_means, unfold_compare)
from .registry import build_field, build_source, register_field, register_source
from .sparse import SolveReport, SparseMatrix, TripletBuffer, finalize, solve_cg
from .transform import (CellIndexing, TransformEval, TransformParams, cell_decompose,
                        eval_psi, eval_psi_batch, eval_psi_eps, eval_psi_eps_batch,
                        eval_psi_inverse, profile, profile_raw)
from .unitcell import (CellSolution, EffectiveTensorTable, PeriodicMesh, ball_volume,
                       build_reference_mesh, compute_A_hom, effective_tensor, porosity,
                       solve_cell_problem, sphere_surface, tabulate)

__all__ = [name for name in dir() if not name.startswith("_")]
