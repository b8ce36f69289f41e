"""Mixed generalized multiscale finite elements for Darcy flow on structured grids."""
from .grid import GridHierarchy, build_hierarchy
from .perm import PermField, periodic_field, synthetic_field, load_layer
from .fine import assemble, solve_global, corner_source
from .snapshot import build_snapshot_space
from .spectral import SPECTRAL_1, SPECTRAL_2, CURL, build_offline
from .coarse import solve_coarse, error_report
from .postprocess import postprocess
from .oversample import OversamplingStudy
from .transport import FluidModel, impes_loop
from .config import RunConfig, load_config

__version__ = "0.1.0"
