"""Obstacle-avoiding Riemannian cubic trajectories.

Fourth-order variational dynamics driven by an energy-plus-navigation
functional, with three solvable problem classes: unconstrained chart
dynamics, the body-velocity reduction on the planar rigid-body group, and
the nonholonomic unicycle with Lagrange multipliers.  A shooting solver with
homotopy continuation handles the two-point boundary problems, and a CLI
turns scenario files into trajectory CSVs and diagnostic reports.
"""

from .errors import (
    DegenerateMetricError,
    InitializationError,
    IntegrationDivergedError,
    NavcubicsError,
    ObstaclePenetrationError,
    SolveFailureError,
    ValidationError,
)
from .geometry import (
    CurveJet,
    ManifoldModel,
    curvature,
    euclidean_chart,
    gradient,
    jets_from_coordinates,
    jets_to_coordinates,
    levi_civita_christoffels,
    se2_chart,
    sphere_chart,
    wrap_angle,
)
from .navigation import NavigationField, circle_potential, circle_potential_gradient
from .dynamics import ELState, el_rhs, first_order_rhs, se2_coordinate_rhs
from .lie_group import (
    BodyState,
    LieAlgebraModel,
    algebra_connection,
    algebra_curvature,
    body_kinematics,
    reduced_el_rhs,
    reduced_jets,
    se2_algebra,
    se2_body_potential_gradient,
    se2_reduced_rhs,
)
from .subriemannian import (
    ConstraintSet,
    abnormal_residual,
    constraint_residual,
    multiplier_closure,
    s_tensor_unicycle,
    unicycle_constraints,
    unicycle_dae_rhs,
)
from .solver import (
    Scenario,
    Trajectory,
    evaluate_functional,
    first_integral_drift,
    first_variation_residual,
    solve_scenario,
)

__version__ = "0.1.0"
