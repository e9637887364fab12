from importlib.metadata import version

from . import load
from . import graph
from . import discrete
from . import quantum
from . import manifold
from . import closeness

from .graph import DensitySpec, EdgeRecord, MetricGraph, generate_graph
from .quantum import FemSystem, assemble_kirchhoff
from .manifold import EmbeddedGraph, assemble_neumann, build_thin_mesh
from .identification import IdentificationSet, build_identification
from .closeness import DeltaReport, SpacePair, measure_closeness, run_sweep
from ._random_pairs import property_suite, random_pair
from ._utils import write_csv

from ._accessor import SweepAccessor

__version__ = version("qgtools")
