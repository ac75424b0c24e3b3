"""Navigation-function potentials for circular obstacles.

Two variants of the repulsive potential over the planar (x, y) block of a
chart: the globally supported inverse form tau / (x^2 + y^2 - 1) and a
compactly supported cutoff form 0.5 * tau * (1/rho - 1/rho0)^2 that vanishes
identically beyond a configurable radius.  Both blow up at the obstacle
boundary, so every evaluation is guarded.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ObstaclePenetrationError
from .geometry import ManifoldModel, gradient

__all__ = [
    "NavigationField",
    "circle_potential",
    "circle_potential_gradient",
    "coordinate_repulsion",
]

DEFAULT_GUARD = 1e-9


def _planar_parts(points, planar):
    pts = np.asarray(points, dtype=float)
    return pts[..., planar[0]], pts[..., planar[1]]


@dataclass(frozen=True)
class NavigationField:
    """Repulsive potential around a circular obstacle.

    ``planar`` gives the chart indices of the (x, y) coordinates; all other
    coordinates are ignored.  ``cutoff_radius`` switches to the compactly
    supported variant (zero for x^2 + y^2 >= cutoff_radius^2); when None the
    globally supported inverse form is used.
    """

    tau: float
    dim: int
    planar: tuple = (0, 1)
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    cutoff_radius: Optional[float] = None
    guard: float = DEFAULT_GUARD

    def with_tau(self, tau):
        return replace(self, tau=float(tau))

    def rho(self, points):
        """Squared clearance (x-cx)^2 + (y-cy)^2 - r^2; zero on the boundary."""
        x, y = _planar_parts(points, self.planar)
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 - self.radius**2

    def _rho0(self):
        return self.cutoff_radius**2 - self.radius**2

    def _guarded_rho(self, points):
        rho = self.rho(points)
        bad = rho <= self.guard
        if np.any(bad):
            pts = np.asarray(points, dtype=float)
            where = pts[bad][0] if pts.ndim > 1 else pts
            raise ObstaclePenetrationError(
                "point lies on or inside the obstacle (squared clearance %g <= guard %g)"
                % (float(np.min(rho)), self.guard),
                point=where,
            )
        return rho

    def value(self, points):
        """Potential value; broadcasts over leading axes of ``points``."""
        if self.tau == 0.0:
            return np.zeros(np.shape(points)[:-1])
        rho = self._guarded_rho(points)
        if self.cutoff_radius is None:
            return self.tau / rho
        rho0 = self._rho0()
        inner = rho < rho0
        d = np.where(inner, 1.0 / np.where(inner, rho, 1.0) - 1.0 / rho0, 0.0)
        return 0.5 * self.tau * d**2

    def differential(self, points):
        """Coordinate differential dV as a covector (zeros off the planar block)."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape)
        if self.tau == 0.0:
            return out
        rho = self._guarded_rho(points)
        x, y = _planar_parts(points, self.planar)
        dx = 2.0 * (x - self.center[0])
        dy = 2.0 * (y - self.center[1])
        if self.cutoff_radius is None:
            dVdrho = -self.tau / rho**2
        else:
            rho0 = self._rho0()
            inner = rho < rho0
            safe = np.where(inner, rho, 1.0)
            dVdrho = np.where(
                inner, -self.tau * (1.0 / safe - 1.0 / rho0) / safe**2, 0.0
            )
        out[..., self.planar[0]] = dVdrho * dx
        out[..., self.planar[1]] = dVdrho * dy
        return out


def circle_potential(p, tau, planar=(0, 1), guard=DEFAULT_GUARD) -> float:
    """Inverse potential tau / (x^2 + y^2 - 1) for the unit circle at the
    origin; non-planar coordinates of ``p`` are ignored.

    The boundary guard applies for every tau: the potential is undefined on
    or inside the circle.
    """
    x, y = _planar_parts(p, planar)
    rho = float(x**2 + y**2 - 1.0)
    if rho <= guard:
        raise ObstaclePenetrationError(
            "point lies on or inside the obstacle (squared clearance %g <= guard %g)"
            % (rho, guard),
            point=np.asarray(p, dtype=float),
        )
    return float(tau) / rho


def circle_potential_gradient(model: ManifoldModel, p, tau, guard=DEFAULT_GUARD) -> np.ndarray:
    """Metric gradient of the inverse potential on ``model``.

    For a chart whose planar block carries mass m this reproduces
    -2 tau / (m (x^2+y^2-1)^2) * (x, y) in the planar components.
    """
    planar = model.planar_coords if model.planar_coords is not None else (0, 1)
    field = NavigationField(tau=float(tau), dim=model.dim, planar=planar, guard=guard)
    dV = field.differential(np.asarray(p, dtype=float))
    return gradient(model, dV, p)


def coordinate_repulsion(x, y, tau, m, guard=DEFAULT_GUARD):
    """The pair (tau*x / (m*rho^2), tau*y / (m*rho^2)) with rho = x^2+y^2-1.

    This is the forcing that the potential contributes to the fourth-order
    coordinate equations (minus one half of the gradient).  Broadcasts.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if tau == 0.0:
        return np.zeros_like(x), np.zeros_like(y)
    rho = x**2 + y**2 - 1.0
    if np.any(rho <= guard):
        raise ObstaclePenetrationError(
            "point lies on or inside the obstacle (squared clearance %g <= guard %g)"
            % (float(np.min(rho)), guard)
        )
    scale = tau / (m * rho**2)
    return scale * x, scale * y
