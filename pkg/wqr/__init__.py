__version__ = "0.1"

from . import utils
from . import geometry
from . import radial
from . import construction
from . import analysis
from . import degree
from . import configs
from . import cli

from .geometry import Ball, BoxDomain, BallIndex, Packing, pack, uncovered_fraction, forced_grid, forced_capacity
from .radial import StretchVariant, RadialStretch, AffineMap
from .construction import ScheduleParams, MapTree, MapTreeNode, build, uniform_tail_bound
from .analysis import total_energy, criticality_sweep, cantor_dimension, kp_selector, blowup_probe, distortion_audit
from .degree import numeric_degree, degree_audit, distributional_pairing, boundary_flux, Bump
from .configs import ExperimentConfig
from .cli import Experiment
from .utils import set_seed, WQRError
