"""BDDC for 3-D linear elasticity built on a constrained direct solver that returns reactions."""
from .bddc import BDDCPreconditioner, assemble_coarse, build_averaging, setup_subdomain
from .constrained_solver import factor, solve, solve_multi
from .estimator import BDDCSolver
from .fem import assemble_global, assemble_subdomain, element_stiffness
from .krylov import SchurOperator, condensed_rhs, pcg, recover_interior, schur_product
from .mesh import STEEL, Material, Mesh, build_dof_map, generate_cube, read_mesh, write_mesh
from .partition import (
    add_averages,
    classify_interface,
    divide_rcb,
    divide_regular,
    enrich_corners,
    initial_plan,
    validate_plan,
)

__version__ = "0.1.0"
