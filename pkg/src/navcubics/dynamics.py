"""Right-hand sides of the fourth-order variational equations.

The covariant form D4x = -R(a, u)u + sigma*a - 0.5*grad(V), its first-order
reduction in covariant jet variables, and the explicit coordinate system for
a planar rigid body on the (theta, x, y) chart.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    CurveJet,
    ManifoldModel,
    curvature,
    gradient,
    levi_civita_christoffels,
)
from .navigation import NavigationField, coordinate_repulsion

__all__ = [
    "ELState",
    "el_rhs",
    "first_order_rhs",
    "se2_coordinate_rhs",
    "first_integral",
]


@dataclass(frozen=True)
class ELState:
    """Evaluation state for the variational equations: a curve jet, the
    tension sigma >= 0, and an optional navigation field."""

    jet: CurveJet
    sigma: float = 0.0
    nav: Optional[NavigationField] = None

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


def half_gradient(model: ManifoldModel, nav: Optional[NavigationField], x) -> np.ndarray:
    """0.5 * grad V at x; zero when no field is set.  Broadcasts on flat charts."""
    x = np.asarray(x, dtype=float)
    if nav is None or nav.tau == 0.0:
        return np.zeros_like(x)
    dV = nav.differential(x)
    if model._metric_inv_const is not None:
        return 0.5 * (dV @ model._metric_inv_const.T)
    return 0.5 * gradient(model, dV, x)


def el_rhs(model: ManifoldModel, state: ELState) -> np.ndarray:
    """Covariant fourth derivative D4x = -R(a, u)u + sigma*a - 0.5*grad V.

    With no navigation field this is exactly the cubic-polynomial-in-tension
    right-hand side.  Broadcasts over leading axes on flat charts; curved
    charts are evaluated pointwise.
    """
    jet = state.jet
    if model.is_flat:
        riem = 0.0
    else:
        riem = curvature(model, jet.a, jet.u, jet.u, jet.x)
    return -riem + state.sigma * jet.a - half_gradient(model, state.nav, jet.x)


def first_order_rhs(model: ManifoldModel, state: ELState):
    """Coordinate time derivatives (xdot, udot, adot, jdot) of the jet state.

    The jet components are covariant, so their coordinate derivatives pick up
    connection corrections; on flat charts the corrections vanish and the
    result is (u, a, j, el_rhs) verbatim.
    """
    jet = state.jet
    d4 = el_rhs(model, state)
    if model.is_flat:
        return jet.u, jet.a, jet.j, d4
    G = levi_civita_christoffels(model, jet.x)
    udot = jet.a - np.einsum("kil,i,l->k", G, jet.u, jet.u)
    adot = jet.j - np.einsum("kil,i,l->k", G, jet.u, jet.a)
    jdot = d4 - np.einsum("kil,i,l->k", G, jet.u, jet.j)
    return jet.u, udot, adot, jdot


def se2_coordinate_rhs(q, q1, q2, q3, sigma, tau, m, guard=1e-9):
    """Fourth derivatives of (theta, x, y) for the planar rigid body:

        theta'''' = sigma * theta''
        x''''     = sigma * x'' + tau*x / (m*(x^2+y^2-1)^2)
        y''''     = sigma * y'' + tau*y / (m*(x^2+y^2-1)^2)

    Broadcasts over leading axes.  ``q3`` is accepted for signature
    uniformity with the constrained system; it does not enter.
    """
    q = np.asarray(q, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    fx, fy = coordinate_repulsion(q[..., 1], q[..., 2], tau, m, guard=guard)
    out = sigma * q2
    out = np.array(out, dtype=float, copy=True)
    out[..., 1] += fx
    out[..., 2] += fy
    return out


def first_integral(model: ManifoldModel, state: ELState) -> float:
    """Conserved quantity of the flow:

        I = <j, u> - 0.5*<a, a> - 0.5*sigma*<u, u> + 0.5*V(x).

    Its time derivative along solutions reduces to -<R(a, u)u, u>, which
    vanishes by the curvature pair symmetry.
    """
    jet = state.jet
    g = model.metric(jet.x)
    v = 0.0
    if state.nav is not None:
        v = float(state.nav.value(jet.x))
    return float(
        jet.j @ g @ jet.u
        - 0.5 * (jet.a @ g @ jet.a)
        - 0.5 * state.sigma * (jet.u @ g @ jet.u)
        + 0.5 * v
    )
