"""Variational solver for scalar-field ground states and vector solutions
of the three-wave interaction Schrodinger system."""

from .radial import (RadialField, RadialGrid, VectorState, dilate,
                     gradient_sq, h1_distance, h1_norm, inner_lambda,
                     integrate, laplacian_apply, make_grid,
                     radial_decay_check, zeros)
from .nonlinearity import (ConditionReport, NonlinearitySpec, SplitEval,
                           check_conditions, eval_F, eval_f, eval_fprime,
                           nu_of, split)
from .functionals import (EnergyReport, SolverError, SystemSpec, action,
                          dual_norm, energy_I, energy_J, pohozaev, residual,
                          triple_product)
from .ground import (AmbiguityError, BracketingError, GroundState,
                     least_energy_set, manifold_minimize, shoot)
from .minimax import (BoxSurface, CollapseError, DescentResult, GeometryError,
                      NeighborhoodError, PathBox, boundary_gap,
                      box_energy_surface, descend, make_box, newton_refine,
                      pohozaev_zero_find, sigma_path, solve_branch_X,
                      solve_branch_Y)
from .analysis import (BESystem, BranchRecord, DichotomyViolation,
                       ProbeReport, SweepResult, be_system_probe,
                       dist_to_limit_sets, nonexistence_probe,
                       sobolev_constant_estimate, structural_contrast, sweep)
from .cli_io import ConfigError, ResultBundle, RunConfig, emit_plotdata, parse_config, render, run

__version__ = "0.1.0"
