"""Degenerate random environments on Z^d: coupled sampling, clusters, barriers."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConditionError, Direction, EdgeSet, ModelSpec, SpecError, check_condition1, check_condition2,
    e1_full_model, e1_model, half_orthant_model, load_spec, orthant_model, starred, two_valued,
)
from .environment import EnvironmentField, funny_backward_fixture  # noqa: E402
from .lattice import LatticeBox, transverse_window  # noqa: E402
from .cluster import backward_cluster, forward_cluster, l_field, mutual_cluster, r_field  # noqa: E402
