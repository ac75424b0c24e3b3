"""Left-invariant reduction machinery for variational dynamics on Lie groups.

The connection restricted to the algebra, its curvature, body-velocity
kinematics and reconstruction on the (theta, x, y) chart of the planar
rigid-body group, the reduced fourth-order equations, and the explicit
closed-form system for that group.

Algebra vectors are numpy arrays of length n; structure constants are stored
as ``c[k, i, j]`` so that ``[e_i, e_j] = sum_k c[k, i, j] e_k``.  All algebra
operations broadcast over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ObstaclePenetrationError
from .navigation import NavigationField

__all__ = [
    "LieAlgebraModel",
    "BodyState",
    "se2_algebra",
    "algebra_connection",
    "algebra_bracket",
    "algebra_curvature",
    "reduced_jets",
    "reduced_el_rhs",
    "se2_reduced_rhs",
    "body_kinematics",
    "spatial_to_body",
    "se2_body_potential_gradient",
    "body_gradient_from_field",
    "body_jets_from_coordinate",
    "coordinate_jets_from_body",
    "se2_adjoint_matrix",
]


@dataclass(frozen=True)
class LieAlgebraModel:
    """Structure constants plus an inner product, with the derived bilinear
    connection table baked in at construction.

    ``inner`` is the symmetric positive-definite matrix of the inner product
    on the algebra; flat/sharp maps are multiplication by ``inner`` and its
    inverse.  ``group`` names the reconstruction chart ("se2" is the only one
    instantiated).
    """

    dim: int
    structure: np.ndarray
    inner: np.ndarray
    group: Optional[str] = None

    def __post_init__(self):
        c = np.asarray(self.structure, dtype=float)
        I = np.asarray(self.inner, dtype=float)
        object.__setattr__(self, "structure", c)
        object.__setattr__(self, "inner", I)
        Iinv = np.linalg.inv(I)
        object.__setattr__(self, "inner_inv", Iinv)
        # (ad*_w I.flat(u))_j = (I u)_k c[k, i, j] w_i  ->  A[j, i, b] w_i u_b
        A = np.einsum("kb,kij->jib", I, c)
        T = A + A.transpose(0, 2, 1)
        conn = 0.5 * c - 0.5 * np.einsum("mj,jpq->mpq", Iinv, T)
        object.__setattr__(self, "connection_table", conn)

    def flat(self, u):
        return np.asarray(u, dtype=float) @ self.inner.T

    def sharp(self, alpha):
        return np.asarray(alpha, dtype=float) @ self.inner_inv.T

    def pairing(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        return np.einsum("...i,ij,...j->...", u, self.inner, w)


@dataclass(frozen=True)
class BodyState:
    """Group element in chart coordinates plus body velocity and its first
    two time derivatives."""

    g: np.ndarray
    v: np.ndarray
    vp: np.ndarray
    vpp: np.ndarray

    def __post_init__(self):
        for name in ("g", "v", "vp", "vpp"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float)
            )


def se2_algebra(m: float = 1.0, inertia: float = 1.0) -> LieAlgebraModel:
    """The planar rigid-body algebra: [e1,e2]=e3, [e2,e3]=0, [e3,e1]=e2,
    inner product diag(inertia, m, m)."""
    c = np.zeros((3, 3, 3))
    c[2, 0, 1] = 1.0
    c[2, 1, 0] = -1.0
    c[1, 2, 0] = 1.0
    c[1, 0, 2] = -1.0
    return LieAlgebraModel(
        dim=3, structure=c, inner=np.diag([float(inertia), float(m), float(m)]), group="se2"
    )


# ---------------------------------------------------------------------------
# algebra-level connection and curvature
# ---------------------------------------------------------------------------

def algebra_bracket(model: LieAlgebraModel, w, u):
    return np.einsum("kij,...i,...j->...k", model.structure, w, u)


def algebra_connection(model: LieAlgebraModel, w, u):
    """Restriction of the Levi-Civita connection to the algebra:

        0.5*[w, u] - 0.5*sharp(ad*_w flat(u) + ad*_u flat(w)).
    """
    return np.einsum("kij,...i,...j->...k", model.connection_table, w, u)


def algebra_curvature(model: LieAlgebraModel, u, v, w):
    """Curvature of the algebra connection on left-invariant fields:

        K(u, v)w = conn_u(conn_v w) - conn_v(conn_u w) - conn_[u,v] w.
    """
    cvw = algebra_connection(model, v, w)
    cuw = algebra_connection(model, u, w)
    return (
        algebra_connection(model, u, cvw)
        - algebra_connection(model, v, cuw)
        - algebra_connection(model, algebra_bracket(model, u, v), w)
    )


# ---------------------------------------------------------------------------
# reduced jets and reduced equations
# ---------------------------------------------------------------------------

def reduced_jets(model: LieAlgebraModel, state: BodyState):
    """Algebra-valued blocks of the covariant derivatives of the curve.

    Returns (d2, d3, d4_remainder) where d2 and d3 are the full second and
    third covariant-derivative blocks and d4_remainder is the fourth block
    without the unknown v''' term.
    """
    v, vp, vpp = state.v, state.vp, state.vpp
    conn = lambda a, b: algebra_connection(model, a, b)
    cvv = conn(v, v)
    d2 = vp + cvv
    d3 = vpp + conn(vp, v) + 2.0 * conn(v, vp) + conn(v, cvv)
    d4_rem = (
        conn(vpp, v)
        + 3.0 * conn(vp, vp)
        + 3.0 * conn(v, vpp)
        + conn(vp, cvv)
        + 2.0 * conn(v, conn(vp, v))
        + 3.0 * conn(v, conn(v, vp))
        + conn(v, conn(v, cvv))
    )
    return d2, d3, d4_rem


def reduced_el_rhs(model: LieAlgebraModel, state: BodyState, sigma, body_grad):
    """Solve the reduced fourth-order equation for v''':

        0 = v''' + d4_remainder + K(v', v)v + K(conn_v v, v)v
            - sigma*conn_v v - sigma*v' + 0.5*body_grad
    """
    v, vp = state.v, state.vp
    _, _, d4_rem = reduced_jets(model, state)
    cvv = algebra_connection(model, v, v)
    correction = (
        d4_rem
        + algebra_curvature(model, vp, v, v)
        + algebra_curvature(model, cvv, v, v)
        - sigma * cvv
        - sigma * vp
        + 0.5 * np.asarray(body_grad, dtype=float)
    )
    return -correction


def se2_reduced_rhs(g, v, vp, vpp, sigma, tau, m, guard=1e-9):
    """Closed-form third derivatives of the body velocity for the planar
    rigid body, with the inverse navigation potential.

    The tension couples as sigma*(v2' - v1*v3) and sigma*(v3' + v1*v2); this
    is the sign consistent with the general reduced equation and validated by
    the coordinate-system oracle.  Broadcasts over leading axes.
    """
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    vp = np.asarray(vp, dtype=float)
    vpp = np.asarray(vpp, dtype=float)
    th, x, y = g[..., 0], g[..., 1], g[..., 2]
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    v1p, v2p, v3p = vp[..., 0], vp[..., 1], vp[..., 2]
    v1pp, v2pp, v3pp = vpp[..., 0], vpp[..., 1], vpp[..., 2]

    if tau != 0.0:
        rho = x**2 + y**2 - 1.0
        if np.any(rho <= guard):
            raise ObstaclePenetrationError(
                "point lies on or inside the obstacle (squared clearance %g <= guard %g)"
                % (float(np.min(rho)), guard)
            )
        # V^2/(m*tau) with V = tau/rho
        pot = tau / (m * rho**2)
    else:
        pot = np.zeros_like(x)
    c, s = np.cos(th), np.sin(th)

    out = np.empty(np.broadcast(g, v).shape)
    out[..., 0] = sigma * v1p
    out[..., 1] = (
        3.0 * v1 * v1p * v2
        + 3.0 * v1**2 * v2p
        - (v1**3 - v1pp) * v3
        + 3.0 * v1p * v3p
        + 3.0 * v1 * v3pp
        + sigma * (v2p - v1 * v3)
        + pot * (x * c + y * s)
    )
    out[..., 2] = (
        3.0 * v1 * v1p * v3
        + 3.0 * v1**2 * v3p
        + (v1**3 - v1pp) * v2
        - 3.0 * v1p * v2p
        - 3.0 * v1 * v2pp
        + sigma * (v3p + v1 * v2)
        + pot * (y * c - x * s)
    )
    return out


# ---------------------------------------------------------------------------
# kinematics: body velocity <-> chart velocity on (theta, x, y)
# ---------------------------------------------------------------------------

def body_kinematics(g, v):
    """Chart velocity from the body velocity (the reconstruction equation):

        theta' = v1,  x' = v2*cos(theta) - v3*sin(theta),
        y' = v2*sin(theta) + v3*cos(theta).
    """
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    th = g[..., 0]
    c, s = np.cos(th), np.sin(th)
    out = np.empty(np.broadcast(g, v).shape)
    out[..., 0] = v[..., 0]
    out[..., 1] = v[..., 1] * c - v[..., 2] * s
    out[..., 2] = v[..., 1] * s + v[..., 2] * c
    return out


def spatial_to_body(g, w):
    """Inverse of :func:`body_kinematics` on chart vectors at g."""
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    th = g[..., 0]
    c, s = np.cos(th), np.sin(th)
    out = np.empty(np.broadcast(g, w).shape)
    out[..., 0] = w[..., 0]
    out[..., 1] = w[..., 1] * c + w[..., 2] * s
    out[..., 2] = -w[..., 1] * s + w[..., 2] * c
    return out


def se2_body_potential_gradient(g, tau, m, guard=1e-9):
    """Body-frame gradient of the inverse potential:

        -(2 V^2)/(m tau) * (0, x cos th + y sin th, y cos th - x sin th)

    evaluated with V = tau/(x^2 + y^2 - 1); equals the rotation of the chart
    gradient into the body frame.  Returns zeros for tau = 0.
    """
    g = np.asarray(g, dtype=float)
    out = np.zeros(g.shape)
    if tau == 0.0:
        return out
    th, x, y = g[..., 0], g[..., 1], g[..., 2]
    rho = x**2 + y**2 - 1.0
    if np.any(rho <= guard):
        raise ObstaclePenetrationError(
            "point lies on or inside the obstacle (squared clearance %g <= guard %g)"
            % (float(np.min(rho)), guard)
        )
    scale = -2.0 * tau / (m * rho**2)
    c, s = np.cos(th), np.sin(th)
    out[..., 1] = scale * (x * c + y * s)
    out[..., 2] = scale * (y * c - x * s)
    return out


def body_gradient_from_field(nav: NavigationField, g, m):
    """Body-frame gradient for an arbitrary planar field on (theta, x, y):
    rotate the chart-metric sharp of the field differential into the body
    frame.  Supports the cutoff variant."""
    g = np.asarray(g, dtype=float)
    dV = nav.differential(g)
    grad = np.zeros_like(dV)
    grad[..., 1] = dV[..., 1] / m
    grad[..., 2] = dV[..., 2] / m
    return spatial_to_body(g, grad)


def se2_adjoint_matrix(g):
    """Adjoint matrix of a group element on the algebra basis (e1, e2, e3).

    For g = (theta, x, y): Ad_g (a, w) = (a, R(theta) w + a * Jmat * (x, y))
    with Jmat = [[0, 1], [-1, 0]].  Used as a documentation oracle for the
    adjoint-norm form of the potential.
    """
    th, x, y = float(g[0]), float(g[1]), float(g[2])
    c, s = np.cos(th), np.sin(th)
    R = np.array([[c, -s], [s, c]])
    Jmat = np.array([[0.0, 1.0], [-1.0, 0.0]])
    ad = np.zeros((3, 3))
    ad[0, 0] = 1.0
    ad[1:, 1:] = R
    ad[1:, 0] = Jmat @ np.array([x, y])
    return ad


# ---------------------------------------------------------------------------
# matched jets: coordinate derivatives <-> body derivatives
# ---------------------------------------------------------------------------

def body_jets_from_coordinate(model: LieAlgebraModel, g, q1, q2, q3):
    """Body state (v, v', v'') matching chart derivatives (q', q'', q''') at
    g on the flat (theta, x, y) chart."""
    v = spatial_to_body(g, q1)
    cvv = algebra_connection(model, v, v)
    vp = spatial_to_body(g, q2) - cvv
    vpp = spatial_to_body(g, q3) - (
        algebra_connection(model, vp, v)
        + 2.0 * algebra_connection(model, v, vp)
        + algebra_connection(model, v, cvv)
    )
    return v, vp, vpp


def coordinate_jets_from_body(model: LieAlgebraModel, state: BodyState):
    """Chart derivatives (q', q'', q''') matching a body state on the flat
    (theta, x, y) chart; inverse of :func:`body_jets_from_coordinate`."""
    d2, d3, _ = reduced_jets(model, state)
    q1 = body_kinematics(state.g, state.v)
    q2 = body_kinematics(state.g, d2)
    q3 = body_kinematics(state.g, d3)
    return q1, q2, q3
