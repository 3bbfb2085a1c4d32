"""Discrete-differential-geometry simulation of compliant origami.

Shells carry stretching and bending through discrete first/second
fundamental forms on a triangle mesh; creases carry torsional springs on
independent virtual fold-angle DOFs plus a dihedral-based bending
coupling.  Implicit Euler dynamics and quasi-static continuation drive
the canonical single-fold, Miura, Waterbomb, and Kresling studies, all
exposed through JSON scenarios and the ``foldsim`` CLI.
"""

from .energy import ElasticModel, EnergyBreakdown, MaterialParams, sv_norm
from .forces import ContactParams, FrictionParams, LoadSet, MagnetSpec
from .mesh import (
    CreaseSet,
    DofMap,
    TriMesh,
    build_mesh,
    dof_layout,
    lumped_mass,
    mark_creases,
)
from .patterns import (
    gen_kresling,
    gen_miura,
    gen_single_fold,
    gen_waterbomb,
    kresling_conjugate_state,
    miura_vertices,
)
from .scenario import build_scenario, parse_scenario, run_scenario
from .solver import (
    BoundarySpec,
    SolverConfig,
    SystemState,
    dynamic_run,
    fd_verify,
    implicit_euler_step,
    linear_solve,
    quasi_static_solve,
    ritz_fold_angle,
)

__version__ = "0.1.0"
