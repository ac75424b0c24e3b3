"""Two-point boundary-value solution of the variational trajectory problems.

Single shooting with a damped Gauss-Newton iteration and finite-difference
Jacobians, fixed-step explicit Runge-Kutta integration, homotopy
continuation in the obstacle strength, composite-Simpson evaluation of the
energy functional, and a directional-derivative check of extremality.

Three problem classes share the machinery: the unconstrained chart dynamics,
the body-velocity (reduced) form on the planar rigid-body group, and the
multiplier-closed unicycle system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dynamics, lie_group, subriemannian
from .dynamics import ELState, half_gradient
from .errors import (
    InitializationError,
    IntegrationDivergedError,
    ObstaclePenetrationError,
    SolveFailureError,
    ValidationError,
)
from .geometry import (
    CurveJet,
    ManifoldModel,
    euclidean_chart,
    jets_to_coordinates,
    se2_chart,
)
from .navigation import NavigationField

__all__ = [
    "Scenario",
    "Trajectory",
    "solve_scenario",
    "evaluate_functional",
    "first_variation_residual",
    "first_integral_drift",
    "perturb_trajectory",
    "hermite_initial_jets",
    "simpson",
]

MANIFOLDS = ("euclidean", "se2", "se2_reduced")
CONSTRAINTS = ("none", "unicycle")

# Sign convention adopted for the tension coupling in the reduced closed-form
# system, validated against the coordinate-system oracle.
TENSION_SIGN_CONVENTION = "sigma*(v2' - v1*v3), sigma*(v3' + v1*v2)"


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Full problem description: chart, tension, navigation field, boundary
    data, constraint selector, and solver settings."""

    manifold: str
    p0: np.ndarray
    v0: np.ndarray
    pT: np.ndarray
    vT: np.ndarray
    T: float
    dim: Optional[int] = None
    m: float = 1.0
    inertia: float = 1.0
    sigma: float = 0.0
    tau: float = 0.0
    cutoff_radius: Optional[float] = None
    constraints: str = "none"
    steps: int = 1000
    integrator_order: int = 4
    newton_tol: float = 1e-10
    max_iterations: int = 50
    continuation_steps: int = 10
    guard: float = 1e-9
    seed: int = 0
    variations: int = 20

    def __post_init__(self):
        for name in ("p0", "v0", "pT", "vT"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    # -- derived objects ----------------------------------------------------
    def chart_dim(self) -> int:
        if self.manifold == "euclidean":
            return int(self.dim) if self.dim else len(self.p0)
        return 3

    def model(self) -> ManifoldModel:
        if self.manifold == "euclidean":
            return euclidean_chart(self.chart_dim())
        return se2_chart(m=self.m, inertia=self.inertia)

    def nav_field(self, tau=None) -> Optional[NavigationField]:
        t = self.tau if tau is None else tau
        if t == 0.0:
            return None
        model = self.model()
        planar = model.planar_coords
        if planar is None:
            planar = (0, 1)
        return NavigationField(
            tau=float(t),
            dim=model.dim,
            planar=planar,
            cutoff_radius=self.cutoff_radius,
            guard=self.guard,
        )

    def constraint_set(self):
        if self.constraints == "unicycle":
            return subriemannian.unicycle_constraints(m=self.m, inertia=self.inertia)
        return None

    def algebra(self):
        return lie_group.se2_algebra(m=self.m, inertia=self.inertia)

    # -- validation ----------------------------------------------------------
    def validate(self):
        if self.manifold not in MANIFOLDS:
            raise ValidationError("unknown manifold %r" % (self.manifold,))
        if self.constraints not in CONSTRAINTS:
            raise ValidationError("unknown constraints %r" % (self.constraints,))
        if self.constraints == "unicycle" and self.manifold != "se2":
            raise ValidationError("unicycle constraints require the se2 chart")
        d = self.chart_dim()
        if self.manifold == "euclidean" and d < 1:
            raise ValidationError("euclidean chart needs dim >= 1")
        for name in ("p0", "v0", "pT", "vT"):
            val = getattr(self, name)
            if val.shape != (d,):
                raise ValidationError(
                    "boundary field %s has %d entries, chart dimension is %d"
                    % (name, val.size, d)
                )
        if not self.T > 0.0:
            raise ValidationError("horizon T must be positive")
        if self.sigma < 0.0:
            raise ValidationError("sigma must be nonnegative")
        if self.tau < 0.0:
            raise ValidationError("tau must be nonnegative")
        if self.m <= 0.0 or self.inertia <= 0.0:
            raise ValidationError("m and J must be positive")
        if self.steps < 2:
            raise ValidationError("steps must be at least 2")
        if self.integrator_order not in (2, 4):
            raise ValidationError("integrator_order must be 2 or 4")
        if self.max_iterations < 1 or self.continuation_steps < 1:
            raise ValidationError("iteration counts must be positive")
        if self.cutoff_radius is not None and self.cutoff_radius <= 1.0:
            raise ValidationError("cutoff_radius must exceed the obstacle radius 1")
        if self.constraints == "unicycle":
            cs = self.constraint_set()
            for name, p, v in (("v0", self.p0, self.v0), ("vT", self.pT, self.vT)):
                val = float(cs.one_forms[0](p) @ v)
                if abs(val) > 1e-10:
                    raise ValidationError(
                        "boundary velocity %s violates the constraint "
                        "omega(v) = x'*sin(theta) - y'*cos(theta) = 0: omega(%s) = %g"
                        % (name, name, val)
                    )
        if self.tau > 0.0:
            model = self.model()
            planar = model.planar_coords or (0, 1)
            for name, p in (("p0", self.p0), ("pT", self.pT)):
                rho = p[planar[0]] ** 2 + p[planar[1]] ** 2 - 1.0
                if rho <= self.guard:
                    raise ValidationError(
                        "endpoint %s lies on or inside the obstacle "
                        "(x^2 + y^2 = %g <= 1)" % (name, rho + 1.0)
                    )
        return self

    def to_dict(self) -> dict:
        """Canonical JSON-ready form (field names as in scenario files)."""
        out = {
            "manifold": self.manifold,
            "p0": list(map(float, self.p0)),
            "v0": list(map(float, self.v0)),
            "pT": list(map(float, self.pT)),
            "vT": list(map(float, self.vT)),
            "T": float(self.T),
            "m": float(self.m),
            "J": float(self.inertia),
            "sigma": float(self.sigma),
            "tau": float(self.tau),
            "cutoff_radius": None if self.cutoff_radius is None else float(self.cutoff_radius),
            "constraints": self.constraints,
            "steps": int(self.steps),
            "integrator_order": int(self.integrator_order),
            "newton_tol": float(self.newton_tol),
            "max_iterations": int(self.max_iterations),
            "continuation_steps": int(self.continuation_steps),
            "guard": float(self.guard),
            "seed": int(self.seed),
            "variations": int(self.variations),
        }
        if self.manifold == "euclidean":
            out["dim"] = self.chart_dim()
        return out


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-sampled solution with uniform diagnostic columns.

    ``internal`` keeps pathway-specific state (covariant jets, body
    velocities, multiplier derivatives, final shooting unknowns) used by the
    drift and first-variation diagnostics; trajectories loaded back from CSV
    carry only the uniform columns.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    accel_norm: np.ndarray
    nav_value: np.ndarray
    constraint: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    internal: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# quadrature and integration
# ---------------------------------------------------------------------------

def simpson(y, t):
    """Composite Simpson rule on a uniform grid; a trailing trapezoid panel
    absorbs an odd interval count."""
    y = np.asarray(y, dtype=float)
    n = len(t) - 1
    h = (t[-1] - t[0]) / n
    if n % 2 == 1:
        if n == 1:
            return 0.5 * h * (y[0] + y[1])
        core = simpson(y[:-1], t[:-1])
        return core + 0.5 * h * (y[-2] + y[-1])
    s = y[0] + y[-1] + 4.0 * np.sum(y[1:-1:2]) + 2.0 * np.sum(y[2:-1:2])
    return float(h / 3.0 * s)


def rk_path(rhs, y0, T, n, order=4, record=True):
    """Fixed-step explicit Runge-Kutta flow of ``rhs`` over [0, T].

    ``y0`` may carry leading batch axes; returns the full path
    (n+1, ..., S) when recording, else the terminal state.
    """
    y = np.array(y0, dtype=float)
    h = T / n
    if record:
        path = np.empty((n + 1,) + y.shape)
        path[0] = y
    t = 0.0
    for i in range(n):
        if order == 4:
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            y = y + h * k2
        t += h
        if record:
            path[i + 1] = y
    if not np.all(np.isfinite(y)):
        raise IntegrationDivergedError("integration produced non-finite values")
    return path if record else y


# ---------------------------------------------------------------------------
# initial guesses
# ---------------------------------------------------------------------------

def hermite_initial_jets(p0, v0, pT, vT, T):
    """Initial acceleration and jerk of the componentwise cubic through the
    boundary data; exact for the flat tension-free problem."""
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    pT = np.asarray(pT, dtype=float)
    vT = np.asarray(vT, dtype=float)
    A = pT - p0 - v0 * T
    B = vT - v0
    c2 = 3.0 * A / T**2 - B / T
    c3 = (B * T - 2.0 * A) / T**3
    return 2.0 * c2, 6.0 * c3


def _detour_jerk_bumps(model, p0, pT, T):
    """Lateral jerk offsets that bend an infeasible straight-through guess
    around the obstacle; tried in order until one integrates cleanly."""
    planar = model.planar_coords
    if planar is None:
        return
    w = np.array([pT[planar[0]] - p0[planar[0]], pT[planar[1]] - p0[planar[1]]])
    nw = np.linalg.norm(w)
    w = w / nw if nw > 1e-12 else np.array([1.0, 0.0])
    normal = np.array([-w[1], w[0]])
    for disp in (2.0, -2.0, 3.5, -3.5, 5.0, -5.0, 8.0, -8.0):
        delta = np.zeros(model.dim)
        kappa = 48.0 * disp / T**3  # mid-horizon displacement ~ disp
        delta[planar[0]] = kappa * normal[0]
        delta[planar[1]] = kappa * normal[1]
        yield delta


# ---------------------------------------------------------------------------
# shooting pathways
# ---------------------------------------------------------------------------

class _ChartPathway:
    """Unconstrained jet dynamics on a chart; unknowns (a0, j0)."""

    def __init__(self, scen: Scenario, tau: float):
        self.scen = scen
        self.model = scen.model()
        self.nav = scen.nav_field(tau)
        self.d = self.model.dim
        self.nz = 2 * self.d

    def rhs(self, t, y):
        d = self.d
        x, u, a, j = y[..., :d], y[..., d : 2 * d], y[..., 2 * d : 3 * d], y[..., 3 * d :]
        if not self.model.is_flat and y.ndim > 1:
            out = np.empty_like(y)
            for i in range(y.shape[0]):
                out[i] = self.rhs(t, y[i])
            return out
        state = ELState(CurveJet(x, u, a, j), self.scen.sigma, self.nav)
        xd, ud, ad, jd = dynamics.first_order_rhs(self.model, state)
        return np.concatenate([xd, ud, ad, jd], axis=-1)

    def _y0(self, Z):
        Z = np.asarray(Z, dtype=float)
        lead = Z.shape[:-1]
        y0 = np.empty(lead + (4 * self.d,))
        y0[..., : self.d] = self.scen.p0
        y0[..., self.d : 2 * self.d] = self.scen.v0
        y0[..., 2 * self.d :] = Z
        return y0

    def shoot(self, Z):
        yT = rk_path(
            self.rhs, self._y0(Z), self.scen.T, self.scen.steps,
            order=self.scen.integrator_order, record=False,
        )
        d = self.d
        return np.concatenate(
            [yT[..., :d] - self.scen.pT, yT[..., d : 2 * d] - self.scen.vT], axis=-1
        )

    def initial_guess(self):
        a0, j0 = hermite_initial_jets(
            self.scen.p0, self.scen.v0, self.scen.pT, self.scen.vT, self.scen.T
        )
        return np.concatenate([a0, j0])

    def detour_guesses(self):
        base = self.initial_guess()
        for delta in _detour_jerk_bumps(self.model, self.scen.p0, self.scen.pT, self.scen.T):
            z = base.copy()
            z[self.d :] += delta
            yield z

    def final_trajectory(self, z) -> Trajectory:
        path = rk_path(
            self.rhs, self._y0(z), self.scen.T, self.scen.steps,
            order=self.scen.integrator_order, record=True,
        )
        d = self.d
        t = np.linspace(0.0, self.scen.T, self.scen.steps + 1)
        x, u = path[:, :d], path[:, d : 2 * d]
        a, j = path[:, 2 * d : 3 * d], path[:, 3 * d :]
        accel = _metric_norms(self.model, x, a)
        navv = self.nav.value(x) if self.nav is not None else np.zeros(len(t))
        return Trajectory(
            t=t, x=x, u=u, accel_norm=accel, nav_value=np.asarray(navv, dtype=float),
            internal={"kind": "chart", "a": a, "j": j, "z": np.array(z)},
        )


class _ReducedPathway:
    """Body-velocity dynamics on the rigid-body group; unknowns (v'0, v''0)."""

    def __init__(self, scen: Scenario, tau: float):
        self.scen = scen
        self.model = scen.model()
        self.alg = scen.algebra()
        self.nav = scen.nav_field(tau)
        self.nz = 6

    def rhs(self, t, y):
        g, v = y[..., :3], y[..., 3:6]
        vp, vpp = y[..., 6:9], y[..., 9:12]
        state = lie_group.BodyState(g, v, vp, vpp)
        if self.nav is not None:
            body_grad = lie_group.body_gradient_from_field(self.nav, g, self.scen.m)
        else:
            body_grad = np.zeros_like(v)
        vppp = lie_group.reduced_el_rhs(self.alg, state, self.scen.sigma, body_grad)
        gd = lie_group.body_kinematics(g, v)
        return np.concatenate([gd, vp, vpp, vppp], axis=-1)

    def _y0(self, Z):
        Z = np.asarray(Z, dtype=float)
        lead = Z.shape[:-1]
        y0 = np.empty(lead + (12,))
        y0[..., :3] = self.scen.p0
        y0[..., 3:6] = lie_group.spatial_to_body(self.scen.p0, self.scen.v0)
        y0[..., 6:] = Z
        return y0

    def shoot(self, Z):
        yT = rk_path(
            self.rhs, self._y0(Z), self.scen.T, self.scen.steps,
            order=self.scen.integrator_order, record=False,
        )
        g, v = yT[..., :3], yT[..., 3:6]
        gd = lie_group.body_kinematics(g, v)
        return np.concatenate([g - self.scen.pT, gd - self.scen.vT], axis=-1)

    def _z_from_chart_jets(self, a0, j0):
        v, vp, vpp = lie_group.body_jets_from_coordinate(
            self.alg, self.scen.p0, self.scen.v0, a0, j0
        )
        return np.concatenate([vp, vpp])

    def initial_guess(self):
        a0, j0 = hermite_initial_jets(
            self.scen.p0, self.scen.v0, self.scen.pT, self.scen.vT, self.scen.T
        )
        return self._z_from_chart_jets(a0, j0)

    def detour_guesses(self):
        a0, j0 = hermite_initial_jets(
            self.scen.p0, self.scen.v0, self.scen.pT, self.scen.vT, self.scen.T
        )
        for delta in _detour_jerk_bumps(self.model, self.scen.p0, self.scen.pT, self.scen.T):
            yield self._z_from_chart_jets(a0, j0 + delta)

    def final_trajectory(self, z) -> Trajectory:
        path = rk_path(
            self.rhs, self._y0(z), self.scen.T, self.scen.steps,
            order=self.scen.integrator_order, record=True,
        )
        t = np.linspace(0.0, self.scen.T, self.scen.steps + 1)
        g, v = path[:, :3], path[:, 3:6]
        vp, vpp = path[:, 6:9], path[:, 9:12]
        state = lie_group.BodyState(g, v, vp, vpp)
        d2, _, _ = lie_group.reduced_jets(self.alg, state)
        u = lie_group.body_kinematics(g, v)
        accel = np.sqrt(np.maximum(self.alg.pairing(d2, d2), 0.0))
        navv = self.nav.value(g) if self.nav is not None else np.zeros(len(t))
        return Trajectory(
            t=t, x=g, u=u, accel_norm=accel, nav_value=np.asarray(navv, dtype=float),
            internal={
                "kind": "reduced", "v": v, "vp": vp, "vpp": vpp, "z": np.array(z),
            },
        )


class _UnicyclePathway:
    """Multiplier-closed constrained dynamics; unknowns are the consistent
    free components (theta'', tangential accel, theta''', tangential jerk,
    lambda0)."""

    def __init__(self, scen: Scenario, tau: float):
        self.scen = scen
        self.model = scen.model()
        self.cs = scen.constraint_set()
        self.nav = scen.nav_field(tau)
        self.nz = 5

    def _q4(self, q, q1, q2, q3, lam):
        hg = half_gradient(self.model, self.nav, q)
        q4_zero = subriemannian.theorem4_assembly(
            self.cs, hg, q, q1, q2, lam, 0.0, self.scen.sigma
        )
        _, _, _, g3 = subriemannian.constraint_time_derivatives(q, q1, q2, q3, q4_zero)
        lam_prime = -self.scen.m * g3
        Y1 = self.cs.vector_fields[0](q)
        return q4_zero + lam_prime[..., None] * Y1, lam_prime

    def rhs(self, t, y):
        q, q1 = y[..., :3], y[..., 3:6]
        q2, q3 = y[..., 6:9], y[..., 9:12]
        lam = y[..., 12]
        q4, lam_prime = self._q4(q, q1, q2, q3, lam)
        return np.concatenate(
            [q1, q2, q3, q4, lam_prime[..., None]], axis=-1
        )

    def _consistent_state(self, Z):
        """Initial (q2, q3, lambda) from the free components, with the normal
        components fixed by the vanishing of the first two constraint
        derivatives."""
        Z = np.asarray(Z, dtype=float)
        th = self.scen.p0[0]
        c, s = math.cos(th), math.sin(th)
        v = self.scen.v0
        t1 = v[0]
        tang_v = v[1] * c + v[2] * s
        th2, tg2, th3, tg3, lam0 = (Z[..., i] for i in range(5))
        n2 = -t1 * tang_v
        x2 = tg2 * c + n2 * s
        y2 = tg2 * s - n2 * c
        n3 = -(2.0 * t1 * (x2 * c + y2 * s) + th2 * tang_v + t1**2 * (v[2] * c - v[1] * s))
        x3 = tg3 * c + n3 * s
        y3 = tg3 * s - n3 * c
        lead = Z.shape[:-1]
        q2 = np.empty(lead + (3,))
        q2[..., 0], q2[..., 1], q2[..., 2] = th2, x2, y2
        q3 = np.empty(lead + (3,))
        q3[..., 0], q3[..., 1], q3[..., 2] = th3, x3, y3
        return q2, q3, lam0

    def _y0(self, Z):
        Z = np.asarray(Z, dtype=float)
        q2, q3, lam0 = self._consistent_state(Z)
        lead = Z.shape[:-1]
        y0 = np.empty(lead + (13,))
        y0[..., :3] = self.scen.p0
        y0[..., 3:6] = self.scen.v0
        y0[..., 6:9] = q2
        y0[..., 9:12] = q3
        y0[..., 12] = lam0
        return y0

    def shoot(self, Z):
        yT = rk_path(
            self.rhs, self._y0(Z), self.scen.T, self.scen.steps,
            order=self.scen.integrator_order, record=False,
        )
        return np.concatenate(
            [yT[..., :3] - self.scen.pT, yT[..., 3:6] - self.scen.vT], axis=-1
        )

    def _z_from_chart_jets(self, a0, j0):
        th = self.scen.p0[0]
        c, s = math.cos(th), math.sin(th)
        return np.array(
            [a0[0], a0[1] * c + a0[2] * s, j0[0], j0[1] * c + j0[2] * s, 0.0]
        )

    def initial_guess(self):
        a0, j0 = hermite_initial_jets(
            self.scen.p0, self.scen.v0, self.scen.pT, self.scen.vT, self.scen.T
        )
        z = self._z_from_chart_jets(a0, j0)
        q2, q3, _ = self._consistent_state(z)
        g0, g1, g2, _ = subriemannian.constraint_time_derivatives(
            self.scen.p0, self.scen.v0, q2, q3, np.zeros(3)
        )
        if max(abs(float(g0)), abs(float(g1)), abs(float(g2))) > 1e-9:
            raise InitializationError(
                "projected initial data violates the constraint derivatives"
            )
        return z

    def detour_guesses(self):
        a0, j0 = hermite_initial_jets(
            self.scen.p0, self.scen.v0, self.scen.pT, self.scen.vT, self.scen.T
        )
        for delta in _detour_jerk_bumps(self.model, self.scen.p0, self.scen.pT, self.scen.T):
            yield self._z_from_chart_jets(a0, j0 + delta)

    def final_trajectory(self, z) -> Trajectory:
        path = rk_path(
            self.rhs, self._y0(np.asarray(z, dtype=float)), self.scen.T,
            self.scen.steps, order=self.scen.integrator_order, record=True,
        )
        t = np.linspace(0.0, self.scen.T, self.scen.steps + 1)
        q, q1 = path[:, :3], path[:, 3:6]
        q2, q3 = path[:, 6:9], path[:, 9:12]
        lam = path[:, 12]
        _, lam_prime = self._q4(q, q1, q2, q3, lam)
        accel = _metric_norms(self.model, q, q2)
        navv = self.nav.value(q) if self.nav is not None else np.zeros(len(t))
        th = q[:, 0]
        constr = q1[:, 1] * np.sin(th) - q1[:, 2] * np.cos(th)
        return Trajectory(
            t=t, x=q, u=q1, accel_norm=accel, nav_value=np.asarray(navv, dtype=float),
            constraint=constr[:, None], lam=lam[:, None],
            internal={
                "kind": "unicycle", "q2": q2, "q3": q3,
                "lam_prime": lam_prime, "z": np.array(z),
            },
        )


def _make_pathway(scen: Scenario, tau: float):
    if scen.constraints == "unicycle":
        return _UnicyclePathway(scen, tau)
    if scen.manifold == "se2_reduced":
        return _ReducedPathway(scen, tau)
    return _ChartPathway(scen, tau)


def _metric_norms(model: ManifoldModel, x, w):
    """Pointwise metric norms of vectors ``w`` at points ``x`` (vectorised
    for constant metrics)."""
    if model.metric_const is not None:
        vals = np.einsum("...i,ij,...j->...", w, model.metric_const, w)
    else:
        vals = np.array([model.inner(x[i], w[i], w[i]) for i in range(len(w))])
    return np.sqrt(np.maximum(vals, 0.0))


# ---------------------------------------------------------------------------
# damped Gauss-Newton
# ---------------------------------------------------------------------------

@dataclass
class _NewtonResult:
    z: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool


def _damped_newton(shoot, z0, tol, max_iter, fd_scale=1e-6):
    z = np.array(z0, dtype=float)
    F = shoot(z)
    it = 0
    while it < max_iter and np.max(np.abs(F)) > tol:
        steps = fd_scale * (1.0 + np.abs(z))
        trial = z[None, :] + np.diag(steps)
        try:
            Fp = shoot(trial)
        except (ObstaclePenetrationError, IntegrationDivergedError):
            Fp = np.empty((len(z), len(F)))
            for k in range(len(z)):
                zk = z.copy()
                zk[k] += steps[k]
                try:
                    Fp[k] = shoot(zk)
                except (ObstaclePenetrationError, IntegrationDivergedError):
                    zk[k] = z[k] + steps[k] * 1e-2
                    steps[k] *= 1e-2
                    try:
                        Fp[k] = shoot(zk)
                    except (ObstaclePenetrationError, IntegrationDivergedError):
                        Fp[k] = F  # dead column
        J = (Fp - F[None, :]).T / steps[None, :]
        delta = np.linalg.lstsq(J, -F, rcond=None)[0]
        norm0 = np.linalg.norm(F)
        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-24:
            try:
                Ft = shoot(z + alpha * delta)
            except (ObstaclePenetrationError, IntegrationDivergedError):
                alpha *= 0.5
                continue
            if np.linalg.norm(Ft) <= (1.0 - 1e-4 * alpha) * norm0:
                z = z + alpha * delta
                F = Ft
                accepted = True
                break
            alpha *= 0.5
        it += 1
        if not accepted:
            break
    return _NewtonResult(z, F, it, bool(np.max(np.abs(F)) <= tol))


# ---------------------------------------------------------------------------
# homotopy driver
# ---------------------------------------------------------------------------

def _stage_schedule(scen: Scenario):
    if scen.tau == 0.0:
        return [0.0]
    n = scen.continuation_steps
    return [0.0] + [scen.tau * (i / n) ** 2 for i in range(1, n + 1)]


def _solve_stage(pw, z, scen):
    """Newton at one continuation stage, falling back to detour seeds when
    the warm start cannot be integrated or stalls."""
    result = None
    try:
        result = _damped_newton(pw.shoot, z, scen.newton_tol, scen.max_iterations)
    except (ObstaclePenetrationError, IntegrationDivergedError):
        result = None
    if result is not None and result.converged:
        return result
    best = result
    for z_try in pw.detour_guesses():
        try:
            cand = _damped_newton(pw.shoot, z_try, scen.newton_tol, scen.max_iterations)
        except (ObstaclePenetrationError, IntegrationDivergedError):
            continue
        if cand.converged:
            return cand
        if best is None or np.linalg.norm(cand.residual) < np.linalg.norm(best.residual):
            best = cand
    return best


def solve_scenario(scen: Scenario, warm_start=None) -> Trajectory:
    """Solve the two-point boundary problem posed by ``scen``.

    Returns a Trajectory with diagnostics; a non-converged solve still
    returns its best trajectory (diagnostics["converged"] is False) whenever
    that trajectory can be integrated, and raises SolveFailureError
    otherwise.
    """
    scen.validate()
    stages = _stage_schedule(scen)
    pw = _make_pathway(scen, stages[0])
    z = np.asarray(warm_start, dtype=float) if warm_start is not None else pw.initial_guess()
    total_iter = 0
    converged = True
    failed_stage = None
    result = None
    for stage_tau in stages:
        pw = _make_pathway(scen, stage_tau)
        result = _solve_stage(pw, z, scen)
        if result is None:
            raise SolveFailureError(
                "no integrable shooting guess at continuation stage tau=%g" % stage_tau,
                diagnostics={"failed_stage_tau": stage_tau, "homotopy_stages": len(stages)},
            )
        total_iter += result.iterations
        z = result.z
        if not result.converged:
            converged = False
            failed_stage = stage_tau
            break
    try:
        traj = pw.final_trajectory(z)
    except (ObstaclePenetrationError, IntegrationDivergedError) as exc:
        raise SolveFailureError(
            "best shooting iterate cannot be integrated: %s" % exc,
            best_residual=float(np.max(np.abs(result.residual))),
            diagnostics={"failed_stage_tau": failed_stage, "homotopy_stages": len(stages)},
        ) from None
    _attach_diagnostics(traj, scen, converged, total_iter, len(stages), failed_stage)
    return traj


def _attach_diagnostics(traj, scen, converged, iterations, n_stages, failed_stage):
    model = scen.model()
    d = traj.diagnostics
    d["converged"] = converged
    d["newton_iterations"] = iterations
    d["homotopy_stages"] = n_stages
    if failed_stage is not None:
        d["failed_stage_tau"] = failed_stage
    br = max(
        float(np.max(np.abs(traj.x[0] - scen.p0))),
        float(np.max(np.abs(traj.u[0] - scen.v0))),
        float(np.max(np.abs(traj.x[-1] - scen.pT))),
        float(np.max(np.abs(traj.u[-1] - scen.vT))),
    )
    d["boundary_residual"] = br
    d["j_value"] = evaluate_functional(traj, scen)
    if traj.constraint is not None:
        d["max_constraint_violation"] = float(np.max(np.abs(traj.constraint)))
    else:
        d["max_constraint_violation"] = None
    if model.planar_coords is not None:
        px, py = model.planar_coords
        d["min_obstacle_clearance"] = float(
            np.min(np.hypot(traj.x[:, px], traj.x[:, py]))
        )
    else:
        d["min_obstacle_clearance"] = None
    d["first_integral_drift"] = first_integral_drift(traj, scen)
    if converged:
        d["first_variation_residual"] = first_variation_residual(
            traj, scen, scen.variations
        )
    else:
        d["first_variation_residual"] = None
    if scen.manifold == "se2_reduced":
        d["tension_sign_convention"] = TENSION_SIGN_CONVENTION
    return d


# ---------------------------------------------------------------------------
# functional, first integral, first variation
# ---------------------------------------------------------------------------

def evaluate_functional(traj: Trajectory, scen: Scenario) -> float:
    """Composite-Simpson quadrature of
    0.5 * (|D2x|^2 + sigma*|dx/dt|^2 + V) on the trajectory grid."""
    model = scen.model()
    if scen.tau > 0.0:
        nav = scen.nav_field()
        nav._guarded_rho(traj.x)
    usq = _metric_norms(model, traj.x, traj.u) ** 2
    integrand = 0.5 * (traj.accel_norm**2 + scen.sigma * usq + traj.nav_value)
    return simpson(integrand, traj.t)


def _coordinate_jets(traj: Trajectory, scen: Scenario):
    """Raw coordinate derivative arrays (x1, x2, x3) along the trajectory."""
    kind = traj.internal.get("kind")
    if kind == "chart":
        model = scen.model()
        if model.is_flat:
            return traj.u, traj.internal["a"], traj.internal["j"]
        n = len(traj.t)
        x2 = np.empty_like(traj.u)
        x3 = np.empty_like(traj.u)
        for i in range(n):
            jet = CurveJet(traj.x[i], traj.u[i], traj.internal["a"][i], traj.internal["j"][i])
            _, _, x2[i], x3[i] = jets_to_coordinates(model, jet)
        return traj.u, x2, x3
    if kind == "reduced":
        alg = scen.algebra()
        state = lie_group.BodyState(
            traj.x, traj.internal["v"], traj.internal["vp"], traj.internal["vpp"]
        )
        return lie_group.coordinate_jets_from_body(alg, state)
    if kind == "unicycle":
        return traj.u, traj.internal["q2"], traj.internal["q3"]
    raise ValueError("trajectory carries no solver state; re-solve the scenario")


def first_integral_drift(traj: Trajectory, scen: Scenario) -> Optional[float]:
    """Relative span of I = <j,u> - 0.5<a,a> - 0.5*sigma<u,u> + 0.5*V along
    the trajectory; None when the solver state is unavailable."""
    kind = traj.internal.get("kind")
    model = scen.model()
    if kind == "chart" and model.metric_const is not None:
        g = model.metric_const
        u, a, j = traj.u, traj.internal["a"], traj.internal["j"]
        I = (
            np.einsum("...i,ij,...j->...", j, g, u)
            - 0.5 * np.einsum("...i,ij,...j->...", a, g, a)
            - 0.5 * scen.sigma * np.einsum("...i,ij,...j->...", u, g, u)
            + 0.5 * traj.nav_value
        )
    elif kind == "reduced":
        alg = scen.algebra()
        state = lie_group.BodyState(
            traj.x, traj.internal["v"], traj.internal["vp"], traj.internal["vpp"]
        )
        d2, d3, _ = lie_group.reduced_jets(alg, state)
        v = traj.internal["v"]
        I = (
            alg.pairing(d3, v)
            - 0.5 * alg.pairing(d2, d2)
            - 0.5 * scen.sigma * alg.pairing(v, v)
            + 0.5 * traj.nav_value
        )
    elif kind == "unicycle":
        g = model.metric_const
        u, a, j = traj.u, traj.internal["q2"], traj.internal["q3"]
        I = (
            np.einsum("...i,ij,...j->...", j, g, u)
            - 0.5 * np.einsum("...i,ij,...j->...", a, g, a)
            - 0.5 * scen.sigma * np.einsum("...i,ij,...j->...", u, g, u)
            + 0.5 * traj.nav_value
        )
    elif kind == "chart":
        a, j = traj.internal["a"], traj.internal["j"]
        I = np.array(
            [
                model.inner(traj.x[i], j[i], traj.u[i])
                - 0.5 * model.inner(traj.x[i], a[i], a[i])
                - 0.5 * scen.sigma * model.inner(traj.x[i], traj.u[i], traj.u[i])
                + 0.5 * traj.nav_value[i]
                for i in range(len(traj.t))
            ]
        )
    else:
        return None
    return float((np.max(I) - np.min(I)) / max(1.0, np.max(np.abs(I))))


# -- admissible variations ---------------------------------------------------

def _bump_profile(t, T):
    """Quartic bump w = (t(T-t)/T^2)^2 and derivatives; w and w' vanish at
    both ends."""
    s = t * (T - t) / T**2
    s1 = (T - 2.0 * t) / T**2
    s2 = -2.0 / T**2
    w = s**2
    w1 = 2.0 * s * s1
    w2 = 2.0 * s1**2 + 2.0 * s * s2
    w3 = 6.0 * s1 * s2
    return w, w1, w2, w3


def _poly_eval(coeffs, t):
    """Evaluate sum_k coeffs[k] t^k and its first three derivatives;
    coeffs has shape (deg+1, d)."""
    deg = coeffs.shape[0] - 1
    d = coeffs.shape[1]
    P = np.zeros((len(t), d))
    P1 = np.zeros_like(P)
    P2 = np.zeros_like(P)
    P3 = np.zeros_like(P)
    for k in range(deg + 1):
        tk = t**k
        P += coeffs[k] * tk[:, None]
        if k >= 1:
            P1 += k * coeffs[k] * (t ** (k - 1))[:, None]
        if k >= 2:
            P2 += k * (k - 1) * coeffs[k] * (t ** (k - 2))[:, None]
        if k >= 3:
            P3 += k * (k - 1) * (k - 2) * coeffs[k] * (t ** (k - 3))[:, None]
    return P, P1, P2, P3


def _free_variation(rng, t, T, d):
    """Random polynomial bump field with X, DX/dt vanishing at both ends;
    normalised to unit sup norm.  Returns (X, X', X'', X''')."""
    coeffs = rng.standard_normal((4, d))
    w, w1, w2, w3 = _bump_profile(t, T)
    C, C1, C2, C3 = _poly_eval(coeffs, t)
    X = w[:, None] * C
    X1 = w1[:, None] * C + w[:, None] * C1
    X2 = w2[:, None] * C + 2.0 * w1[:, None] * C1 + w[:, None] * C2
    X3 = (
        w3[:, None] * C
        + 3.0 * w2[:, None] * C1
        + 3.0 * w1[:, None] * C2
        + w[:, None] * C3
    )
    scale = np.max(np.abs(X))
    if scale < 1e-30:
        scale = 1.0
    return X / scale, X1 / scale, X2 / scale, X3 / scale


def _cumtrapz(f, t):
    dt = np.diff(t)
    out = np.zeros(len(t))
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * dt)
    return out


def _constrained_variation(rng, t, T, traj):
    """Bump field compatible with the linearised rolling constraint.

    Decomposes the planar part into heading-tangential (phi) and normal
    (psi) components; psi integrates psidot = phi*theta' - Xth*(x'c + y's)
    and the terminal value is cancelled with a secondary profile so the
    variation is admissible end to end.  Returns (X, X', X'').
    """
    th = traj.x[:, 0]
    c, s = np.cos(th), np.sin(th)
    t1 = traj.u[:, 0]
    x1, y1 = traj.u[:, 1], traj.u[:, 2]
    q2 = traj.internal["q2"]
    t2, x2, y2 = q2[:, 0], q2[:, 1], q2[:, 2]
    speed_along = x1 * c + y1 * s

    w, w1, w2, _ = _bump_profile(t, T)
    pc = rng.standard_normal(3)
    tc = rng.standard_normal(3)
    phi = w * (pc[0] + pc[1] * t + pc[2] * t**2)
    phi1 = w1 * (pc[0] + pc[1] * t + pc[2] * t**2) + w * (pc[1] + 2.0 * pc[2] * t)
    phi2 = (
        w2 * (pc[0] + pc[1] * t + pc[2] * t**2)
        + 2.0 * w1 * (pc[1] + 2.0 * pc[2] * t)
        + w * 2.0 * pc[2]
    )
    Xth = w * (tc[0] + tc[1] * t + tc[2] * t**2)
    Xth1 = w1 * (tc[0] + tc[1] * t + tc[2] * t**2) + w * (tc[1] + 2.0 * tc[2] * t)
    Xth2 = (
        w2 * (tc[0] + tc[1] * t + tc[2] * t**2)
        + 2.0 * w1 * (tc[1] + 2.0 * tc[2] * t)
        + w * 2.0 * tc[2]
    )

    def psi_terminal(phi_arr, Xth_arr):
        return _cumtrapz(phi_arr * t1 - Xth_arr * speed_along, t)[-1]

    # cancel psi(T) with a secondary phi profile, falling back to theta
    drift = psi_terminal(phi, Xth)
    I_phi2 = psi_terminal(w, np.zeros_like(w))
    if abs(I_phi2) > 1e-10:
        kappa = -drift / I_phi2
        phi = phi + kappa * w
        phi1 = phi1 + kappa * w1
        phi2 = phi2 + kappa * w2
    else:
        I_th2 = psi_terminal(np.zeros_like(w), w)
        if abs(I_th2) > 1e-10:
            kappa = drift / I_th2
            Xth = Xth + kappa * w
            Xth1 = Xth1 + kappa * w1
            Xth2 = Xth2 + kappa * w2

    psid = phi * t1 - Xth * speed_along
    psi = _cumtrapz(psid, t)
    psid2 = (
        phi1 * t1
        + phi * t2
        - Xth1 * speed_along
        - Xth * (x2 * c + y2 * s + t1 * (y1 * c - x1 * s))
    )

    Xx = phi * c + psi * s
    Xy = phi * s - psi * c
    Xx1 = phi1 * c - phi * t1 * s + psid * s + psi * t1 * c
    Xy1 = phi1 * s + phi * t1 * c - psid * c + psi * t1 * s
    Xx2 = (
        phi2 * c - 2.0 * phi1 * t1 * s - phi * (t2 * s + t1**2 * c)
        + psid2 * s + 2.0 * psid * t1 * c + psi * (t2 * c - t1**2 * s)
    )
    Xy2 = (
        phi2 * s + 2.0 * phi1 * t1 * c + phi * (t2 * c - t1**2 * s)
        - psid2 * c + 2.0 * psid * t1 * s + psi * (t2 * s + t1**2 * c)
    )
    X = np.stack([Xth, Xx, Xy], axis=1)
    X1 = np.stack([Xth1, Xx1, Xy1], axis=1)
    X2 = np.stack([Xth2, Xx2, Xy2], axis=1)
    scale = np.max(np.abs(X))
    if scale < 1e-30:
        scale = 1.0
    return X / scale, X1 / scale, X2 / scale


def _functional_on_coordinates(scen, t, x, x1, x2):
    """J evaluated from raw coordinate derivative arrays (flat charts)."""
    model = scen.model()
    nav = scen.nav_field()
    accel_sq = np.einsum("...i,ij,...j->...", x2, model.metric_const, x2)
    usq = np.einsum("...i,ij,...j->...", x1, model.metric_const, x1)
    V = nav.value(x) if nav is not None else np.zeros(len(t))
    integrand = 0.5 * (accel_sq + scen.sigma * usq + V)
    return simpson(integrand, t)


def first_variation_residual(traj: Trajectory, scen: Scenario, n_variations: int,
                             r: float = 1e-4) -> float:
    """Largest normalised directional derivative of J over seeded random
    admissible variations of the trajectory.

    Each variation X satisfies X = DX/dt = 0 at both ends (projected onto
    the linearised constraint for the unicycle); the derivative is the
    central difference (J(x + rX) - J(x - rX)) / (2r), normalised by the
    scale of J.
    """
    model = scen.model()
    if model.metric_const is None:
        raise ValueError("first-variation check requires a flat chart")
    x1, x2, _ = _coordinate_jets(traj, scen)
    rng = np.random.default_rng(scen.seed)
    J0 = evaluate_functional(traj, scen)
    scale = max(1.0, abs(J0))
    worst = 0.0
    for _ in range(n_variations):
        if scen.constraints == "unicycle":
            X, X1, X2 = _constrained_variation(rng, traj.t, scen.T, traj)
        else:
            X, X1, X2, _ = _free_variation(rng, traj.t, scen.T, model.dim)
        Jp = _functional_on_coordinates(scen, traj.t, traj.x + r * X, x1 + r * X1, x2 + r * X2)
        Jm = _functional_on_coordinates(scen, traj.t, traj.x - r * X, x1 - r * X1, x2 - r * X2)
        worst = max(worst, abs(Jp - Jm) / (2.0 * r) / scale)
    return float(worst)


def perturb_trajectory(traj: Trajectory, scen: Scenario, magnitude: float,
                       seed: int = 1) -> Trajectory:
    """Deliberately non-extremal copy of a chart trajectory: shift it along
    one admissible variation with the given magnitude (diagnostic use)."""
    if traj.internal.get("kind") != "chart":
        raise ValueError("perturb_trajectory supports chart trajectories only")
    model = scen.model()
    rng = np.random.default_rng(seed)
    X, X1, X2, X3 = _free_variation(rng, traj.t, scen.T, model.dim)
    x = traj.x + magnitude * X
    u = traj.u + magnitude * X1
    a = traj.internal["a"] + magnitude * X2
    j = traj.internal["j"] + magnitude * X3
    nav = scen.nav_field()
    navv = nav.value(x) if nav is not None else np.zeros(len(traj.t))
    return Trajectory(
        t=traj.t, x=x, u=u,
        accel_norm=_metric_norms(model, x, a),
        nav_value=np.asarray(navv, dtype=float),
        internal={"kind": "chart", "a": a, "j": j},
    )
