"""Safe-control workbench: barrier-constrained QP filters, closed-loop
benchmarks over randomized obstacle fields, pointwise feasibility
certification, and an interactive playground service.
"""

__version__ = "0.1.0"

from . import barriers, bench, certify, filters, models, qp, world  # noqa: F401
from .bench import TrialConfig, TrialEngine, run_sweep, run_trial  # noqa: F401
from .certify import DomainGrid, pointwise_margin, scan_domain  # noqa: F401
from .filters import FilterSpec, filter_control  # noqa: F401
from .models import SimConfig, SystemModel  # noqa: F401
from .world import Environment, sample_environment  # noqa: F401
