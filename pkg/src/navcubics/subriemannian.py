"""Sub-Riemannian constraint machinery for the knife-edge (unicycle) system.

Constraint one-forms and their sharp vector fields, the skew S-tensors that
encode the exterior derivative of each one-form, the constrained
fourth-order equations with Lagrange multipliers, the algebraic closure that
supplies lambda', and the abnormal-extremal residual.

Chart convention: (theta, x, y) with kinetic-energy metric diag(J, m, m).
The rolling constraint is x' sin(theta) = y' cos(theta); its one-form is
omega = sin(theta) dx - cos(theta) dy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import CurveJet
from .navigation import coordinate_repulsion

__all__ = [
    "ConstraintSet",
    "unicycle_constraints",
    "constraint_residual",
    "s_tensor_unicycle",
    "unicycle_dae_rhs",
    "theorem4_assembly",
    "constraint_time_derivatives",
    "multiplier_closure",
    "abnormal_residual",
]


@dataclass(frozen=True)
class ConstraintSet:
    """Velocity constraints omega_j(dx/dt) = 0 with their metric sharps Y_j
    and skew tensors S_j, each a callable of the chart point (S_j also takes
    the vector it acts on)."""

    one_forms: Sequence[Callable]
    vector_fields: Sequence[Callable]
    s_tensors: Sequence[Callable]

    @property
    def k(self):
        return len(self.one_forms)


def unicycle_constraints(m: float = 1.0, inertia: float = 1.0) -> ConstraintSet:
    """The single rolling constraint of the unicycle on (theta, x, y)."""

    def omega(p):
        th = p[0]
        return np.array([0.0, np.sin(th), -np.cos(th)])

    def Y1(p):
        th = p[0]
        return np.array([0.0, np.sin(th) / m, -np.cos(th) / m])

    def S(p, u):
        return s_tensor_unicycle(u, p[0], m, inertia)

    return ConstraintSet(one_forms=(omega,), vector_fields=(Y1,), s_tensors=(S,))


def constraint_residual(cs: ConstraintSet, jet: CurveJet) -> np.ndarray:
    """Values omega_j(u); all zero means the jet velocity is admissible."""
    return np.array([float(w(jet.x) @ jet.u) for w in cs.one_forms])


def s_tensor_unicycle(U, theta, m, inertia):
    """Skew tensor of the rolling one-form:

        S(U) = -(1/J)(u2 cos th + u3 sin th) d/dtheta
               + (u1/m)(cos th d/dx + sin th d/dy)

    for U = u1 d/dtheta + u2 d/dx + u3 d/dy.  Broadcasts over leading axes.
    """
    U = np.asarray(U, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(np.broadcast(U[..., 0], theta).shape + (3,))
    out[..., 0] = -(U[..., 1] * c + U[..., 2] * s) / inertia
    out[..., 1] = U[..., 0] * c / m
    out[..., 2] = U[..., 0] * s / m
    return out


def unicycle_dae_rhs(q, q1, q2, q3, lam, lam_prime, sigma, tau, m, inertia, guard=1e-9):
    """Fourth derivatives of (theta, x, y) for the constrained system:

        theta'''' = sigma*theta'' - (lam/J)(x' cos th + y' sin th)
        x''''     = sigma*x'' + tau*x/(m*rho^2) + (lam'/m) sin th + (lam*theta'/m) cos th
        y''''     = sigma*y'' + tau*y/(m*rho^2) - (lam'/m) cos th + (lam*theta'/m) sin th

    with rho = x^2 + y^2 - 1.  Broadcasts; ``q3`` is accepted for signature
    uniformity and does not enter.
    """
    q = np.asarray(q, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam_prime = np.asarray(lam_prime, dtype=float)
    th = q[..., 0]
    c, s = np.cos(th), np.sin(th)
    fx, fy = coordinate_repulsion(q[..., 1], q[..., 2], tau, m, guard=guard)
    thp = q1[..., 0]
    out = np.empty(q.shape)
    out[..., 0] = sigma * q2[..., 0] - (lam / inertia) * (q1[..., 1] * c + q1[..., 2] * s)
    out[..., 1] = sigma * q2[..., 1] + fx + (lam_prime / m) * s + (lam * thp / m) * c
    out[..., 2] = sigma * q2[..., 2] + fy - (lam_prime / m) * c + (lam * thp / m) * s
    return out


def theorem4_assembly(cs: ConstraintSet, half_grad, q, q1, q2, lam, lam_prime, sigma):
    """Generic constrained right-hand side on a flat chart:

        q'''' = sigma*q'' - 0.5*grad V + sum_j lam_j' Y_j + sum_j lam_j S_j(q')

    assembled from the constraint set; the printed unicycle system must agree
    with this to machine precision.
    """
    q = np.asarray(q, dtype=float)
    out = sigma * np.asarray(q2, dtype=float) - np.asarray(half_grad, dtype=float)
    out = np.array(out, dtype=float, copy=True)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    lam_prime = np.atleast_1d(np.asarray(lam_prime, dtype=float))
    for j in range(cs.k):
        out = out + lam_prime[j] * cs.vector_fields[j](q) + lam[j] * cs.s_tensors[j](q, q1)
    return out


def constraint_time_derivatives(q, q1, q2, q3, q4):
    """Time derivatives (g, g', g'', g''') of g = x' sin th - y' cos th along
    a curve with the given coordinate derivatives.  Broadcasts."""
    q = np.asarray(q, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    q3 = np.asarray(q3, dtype=float)
    q4 = np.asarray(q4, dtype=float)
    th = q[..., 0]
    c, s = np.cos(th), np.sin(th)
    t1, x1, y1 = q1[..., 0], q1[..., 1], q1[..., 2]
    t2, x2, y2 = q2[..., 0], q2[..., 1], q2[..., 2]
    t3, x3, y3 = q3[..., 0], q3[..., 1], q3[..., 2]
    x4, y4 = q4[..., 1], q4[..., 2]

    g0 = x1 * s - y1 * c
    g1 = x2 * s - y2 * c + t1 * (x1 * c + y1 * s)
    g2 = (
        x3 * s
        - y3 * c
        + 2.0 * t1 * (x2 * c + y2 * s)
        + t2 * (x1 * c + y1 * s)
        + t1**2 * (y1 * c - x1 * s)
    )
    g3 = (
        x4 * s
        - y4 * c
        + 3.0 * t1 * (x3 * c + y3 * s)
        + 3.0 * t2 * (x2 * c + y2 * s)
        + 3.0 * t1**2 * (y2 * c - x2 * s)
        + t3 * (x1 * c + y1 * s)
        + 3.0 * t1 * t2 * (y1 * c - x1 * s)
        - t1**3 * (x1 * c + y1 * s)
    )
    return g0, g1, g2, g3


def multiplier_closure(q, q1, q2, q3, sigma, tau, m, inertia, lam=0.0, guard=1e-9):
    """Index reduction: lambda' that makes the third constraint derivative
    vanish.

    lambda' enters the fourth derivatives linearly with coefficient 1/m in
    g''', so g''' evaluated at lambda' = 0 determines it:
    lambda' = -m * g'''|_{lambda'=0}.  Returns (lambda, lambda').  Broadcasts.
    """
    q4_zero = unicycle_dae_rhs(
        q, q1, q2, q3, lam, 0.0, sigma, tau, m, inertia, guard=guard
    )
    _, _, _, g3 = constraint_time_derivatives(q, q1, q2, q3, q4_zero)
    lam_prime = -m * g3
    return np.asarray(lam, dtype=float), lam_prime


def abnormal_residual(cs: ConstraintSet, jet: CurveJet, lam, lam_prime) -> np.ndarray:
    """The abnormal-extremal expression sum_j lam_j' Y_j + sum_j lam_j S_j(u);
    a candidate abnormal datum makes it vanish with not all lam_j zero."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    lam_prime = np.atleast_1d(np.asarray(lam_prime, dtype=float))
    out = np.zeros_like(jet.u)
    for j in range(cs.k):
        out = out + lam_prime[j] * cs.vector_fields[j](jet.x) + lam[j] * cs.s_tensors[j](
            jet.x, jet.u
        )
    return out
