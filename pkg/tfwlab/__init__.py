from .common import ConfigError, TFWError
from .grid import Grid, ScalarField, VectorField, make_grid
from .nuclei import NuclearConfig, NucleusShape, assemble_density, simple_cubic
from .groundstate import GroundState, SolverOptions, solve_ground_state
from .response import LinearisedSolver, screening_constants, solve_linearised
from .siteenergy import Partition, build_partition, site_energies, site_forces
from .experiments import ExperimentReport
