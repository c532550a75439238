"""Computable sub-Riemannian geometry on the Heisenberg group and its quotients.

Subpackages cover the group algebra and horizontal curves (`heis`),
Carnot-Caratheodory distances and geodesics with an independent brute-force
oracle (`geodesics`), lattice quotients (`lattice`), quasiconformal
dilatation machinery (`qcmaps`), the discrete 4-modulus solver (`modulus`),
and the experiment command line (`cli`).
"""

from .heis import (
    HeisPoint,
    HorizontalVector,
    LegendrianPolyline,
    MetricK,
    NonLegendrianError,
    OutOfDomainError,
    TangentVector,
    curve_length,
    dilate,
    eta,
    flow_x,
    flow_y,
    frame_at,
    group_inv,
    group_mul,
    line_integral,
)
from .geodesics import (
    BudgetExhaustedError,
    GeodesicSolution,
    OracleBudget,
    brute_force_distance,
    cc_distance,
    cc_distance_scaled,
    geodesic,
)
from .lattice import GroupWord, LatticeSpec, QuotientPoint
from .qcmaps import (
    ContactMapSample,
    DilatationReport,
    NotContactError,
    OrientationReversedError,
    beltrami,
    builtin_map,
    contact_factor,
    dilatation,
    extremal_map,
    horizontal_differential,
    push_curve,
)
from .modulus import (
    ConstraintMatrix,
    CurveFamilySample,
    Grid,
    InfeasibleError,
    ModulusResult,
    NotConvergedError,
    QuasiInvarianceReport,
    analytic_modulus_fibration,
    assemble_constraints,
    family_x_lines,
    solve_modulus,
    verify_quasi_invariance,
)

__version__ = "0.1.0"
