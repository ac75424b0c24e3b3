"""Chart-based Riemannian geometry kernel.

Metric, Levi-Civita connection, curvature tensor, metric gradients, and
conversion between raw coordinate derivatives and covariant jets along a
curve.  Everything lives in a single coordinate chart: points, tangent
vectors and covectors are plain numpy arrays of length ``dim``.

Index conventions: ``gamma[k, i, j]`` is the connection coefficient with
upper index ``k``; metric derivative ``dg[a, b, c]`` means the partial of
``g_bc`` along coordinate ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateMetricError

__all__ = [
    "ManifoldModel",
    "CurveJet",
    "levi_civita_christoffels",
    "christoffel_derivatives",
    "curvature",
    "gradient",
    "jets_from_coordinates",
    "jets_to_coordinates",
    "covariant_derivative_along",
    "euclidean_chart",
    "se2_chart",
    "sphere_chart",
    "wrap_angle",
]

FD_SCALE = 1e-5


def _as_array(p):
    return np.asarray(p, dtype=float)


def _fd_step(p):
    return FD_SCALE * (1.0 + float(np.linalg.norm(p)))


def _check_spd(g):
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DegenerateMetricError(
            "metric is not symmetric positive definite: %r" % (g,)
        ) from None


@dataclass(frozen=True)
class CurveJet:
    """State of a curve at one instant: position, velocity, covariant
    acceleration and covariant jerk, all in chart components."""

    x: np.ndarray
    u: np.ndarray
    a: np.ndarray
    j: np.ndarray

    def __post_init__(self):
        for name in ("x", "u", "a", "j"):
            object.__setattr__(self, name, _as_array(getattr(self, name)))


@dataclass(frozen=True)
class ManifoldModel:
    """A coordinate chart with its metric and connection data.

    ``metric_at`` maps a chart point to the dim x dim metric matrix.
    ``christoffel_at`` is an optional analytic connection field; when absent
    the connection is obtained by central finite differences of the metric.
    ``metric_const`` may carry the constant metric matrix of a flat chart so
    that vectorised code paths can avoid per-point callables.
    ``planar_coords`` names the (x, y) pair used by circular-obstacle
    potentials; ``angle_coords`` names coordinates that are wrapped in
    formatted output (never during integration).
    """

    dim: int
    metric_at: Callable[[np.ndarray], np.ndarray]
    christoffel_at: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_flat: bool = False
    metric_const: Optional[np.ndarray] = None
    angle_coords: tuple = ()
    planar_coords: Optional[tuple] = None
    coord_names: tuple = ()
    name: str = "chart"

    def __post_init__(self):
        if not self.coord_names:
            object.__setattr__(
                self, "coord_names", tuple("x%d" % (i + 1) for i in range(self.dim))
            )
        if self.metric_const is not None:
            mc = np.asarray(self.metric_const, dtype=float)
            _check_spd(mc)
            object.__setattr__(self, "metric_const", mc)
            object.__setattr__(self, "_metric_inv_const", np.linalg.inv(mc))
        else:
            object.__setattr__(self, "_metric_inv_const", None)

    # -- metric -----------------------------------------------------------
    def metric(self, p):
        if self.metric_const is not None:
            return self.metric_const
        g = np.asarray(self.metric_at(_as_array(p)), dtype=float)
        _check_spd(g)
        return g

    def metric_inverse(self, p):
        if self._metric_inv_const is not None:
            return self._metric_inv_const
        return np.linalg.inv(self.metric(p))

    def inner(self, p, X, Y):
        g = self.metric(p)
        X = _as_array(X)
        Y = _as_array(Y)
        return float(X @ g @ Y)

    def norm(self, p, X):
        return np.sqrt(max(self.inner(p, X, X), 0.0))

    def christoffels(self, p):
        return levi_civita_christoffels(self, p)


# ---------------------------------------------------------------------------
# connection and curvature
# ---------------------------------------------------------------------------

def levi_civita_christoffels(model: ManifoldModel, p) -> np.ndarray:
    """Connection coefficients gamma[k, i, j] at chart point ``p``.

    Registered analytic fields are returned directly; otherwise the
    coefficients come from central finite differences of the metric with
    step ``1e-5 * (1 + |p|)``.
    """
    p = _as_array(p)
    if model.christoffel_at is not None:
        return np.asarray(model.christoffel_at(p), dtype=float)
    if model.is_flat and model.metric_const is not None:
        return np.zeros((model.dim,) * 3)
    g = model.metric(p)
    ginv = np.linalg.inv(g)
    h = _fd_step(p)
    dg = np.empty((model.dim, model.dim, model.dim))
    for a in range(model.dim):
        e = np.zeros(model.dim)
        e[a] = h
        dg[a] = (model.metric(p + e) - model.metric(p - e)) / (2.0 * h)
    # T[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
    T = dg.transpose(1, 0, 2) + dg.transpose(2, 0, 1) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, T)


def christoffel_derivatives(model: ManifoldModel, p) -> np.ndarray:
    """Central finite differences d_l gamma[k, i, j], indexed [l, k, i, j]."""
    p = _as_array(p)
    h = _fd_step(p)
    out = np.empty((model.dim,) * 4)
    for a in range(model.dim):
        e = np.zeros(model.dim)
        e[a] = h
        out[a] = (
            levi_civita_christoffels(model, p + e)
            - levi_civita_christoffels(model, p - e)
        ) / (2.0 * h)
    return out


def curvature(model: ManifoldModel, X, Y, Z, p) -> np.ndarray:
    """Curvature tensor R(X, Y)Z at ``p`` from the connection coefficients
    and their first derivatives.  Flat charts short-circuit to zero."""
    X = _as_array(X)
    Y = _as_array(Y)
    Z = _as_array(Z)
    if model.is_flat:
        return np.zeros_like(Z)
    p = _as_array(p)
    G = levi_civita_christoffels(model, p)
    dG = christoffel_derivatives(model, p)
    t1 = np.einsum("iljk,i,j,k->l", dG, X, Y, Z)
    t2 = np.einsum("jlik,i,j,k->l", dG, X, Y, Z)
    t3 = np.einsum("lim,mjk,i,j,k->l", G, G, X, Y, Z)
    t4 = np.einsum("ljm,mik,i,j,k->l", G, G, X, Y, Z)
    return t1 - t2 + t3 - t4


def gradient(model: ManifoldModel, dV, p) -> np.ndarray:
    """Metric sharp of the covector ``dV``: the vector W with <W, Z> = dV(Z)."""
    dV = _as_array(dV)
    if model._metric_inv_const is not None:
        return dV @ model._metric_inv_const.T
    g = model.metric(p)
    return np.linalg.solve(g, dV)


# ---------------------------------------------------------------------------
# covariant jets along a curve
# ---------------------------------------------------------------------------

def covariant_derivative_along(model: ManifoldModel, p, u, W, Wdot) -> np.ndarray:
    """(DW/dt)^k = Wdot^k + gamma^k_ij u^i W^j for a field W along a curve
    with velocity u at point p."""
    G = levi_civita_christoffels(model, p)
    return _as_array(Wdot) + np.einsum("kij,i,j->k", G, _as_array(u), _as_array(W))


def jets_from_coordinates(model: ManifoldModel, x, xd, xdd, xddd) -> CurveJet:
    """Covariant jet (x, u, a, j) from raw coordinate derivatives.

    a^k = xdd^k + gamma^k_ij xd^i xd^j and j is the covariant derivative of a
    along the curve, which pulls in the first derivatives of gamma.
    On flat charts the map is the identity.
    """
    x = _as_array(x)
    xd = _as_array(xd)
    xdd = _as_array(xdd)
    xddd = _as_array(xddd)
    if model.is_flat:
        return CurveJet(x, xd, xdd, xddd)
    G = levi_civita_christoffels(model, x)
    dG = christoffel_derivatives(model, x)
    a = xdd + np.einsum("kij,i,j->k", G, xd, xd)
    # coordinate derivative of a along the curve
    adot = (
        xddd
        + np.einsum("mkij,m,i,j->k", dG, xd, xd, xd)
        + 2.0 * np.einsum("kij,i,j->k", G, xdd, xd)
    )
    j = adot + np.einsum("kil,i,l->k", G, xd, a)
    return CurveJet(x, xd, a, j)


def jets_to_coordinates(model: ManifoldModel, jet: CurveJet):
    """Inverse of :func:`jets_from_coordinates`; exact up to round-off."""
    if model.is_flat:
        return jet.x, jet.u, jet.a, jet.j
    x, u, a, j = jet.x, jet.u, jet.a, jet.j
    G = levi_civita_christoffels(model, x)
    dG = christoffel_derivatives(model, x)
    xdd = a - np.einsum("kij,i,j->k", G, u, u)
    adot = j - np.einsum("kil,i,l->k", G, u, a)
    xddd = (
        adot
        - np.einsum("mkij,m,i,j->k", dG, u, u, u)
        - 2.0 * np.einsum("kij,i,j->k", G, xdd, u)
    )
    return x, u, xdd, xddd


# ---------------------------------------------------------------------------
# chart factories
# ---------------------------------------------------------------------------

def euclidean_chart(dim: int, weights=None, name: str = "euclidean") -> ManifoldModel:
    """Flat chart on R^dim with a constant diagonal metric (identity by
    default, or ``diag(weights)``)."""
    if weights is None:
        g = np.eye(dim)
    else:
        g = np.diag(np.asarray(weights, dtype=float))
    zero = np.zeros((dim, dim, dim))
    return ManifoldModel(
        dim=dim,
        metric_at=lambda p, _g=g: _g,
        christoffel_at=lambda p, _z=zero: _z,
        is_flat=True,
        metric_const=g,
        planar_coords=(0, 1) if dim >= 2 else None,
        name=name,
    )


def se2_chart(m: float = 1.0, inertia: float = 1.0) -> ManifoldModel:
    """Planar rigid-body chart (theta, x, y) with constant kinetic-energy
    metric diag(inertia, m, m).  Flat: every connection coefficient vanishes."""
    g = np.diag([float(inertia), float(m), float(m)])
    zero = np.zeros((3, 3, 3))
    return ManifoldModel(
        dim=3,
        metric_at=lambda p, _g=g: _g,
        christoffel_at=lambda p, _z=zero: _z,
        is_flat=True,
        metric_const=g,
        angle_coords=(0,),
        planar_coords=(1, 2),
        coord_names=("theta", "x", "y"),
        name="se2",
    )


def _sphere_metric(p):
    return np.diag([1.0, np.sin(p[0]) ** 2])


def _sphere_christoffels(p):
    th = p[0]
    G = np.zeros((2, 2, 2))
    G[0, 1, 1] = -np.sin(th) * np.cos(th)
    G[1, 0, 1] = G[1, 1, 0] = np.cos(th) / np.sin(th)
    return G


def sphere_chart() -> ManifoldModel:
    """Round unit sphere in polar coordinates (theta, phi).

    Non-flat test fixture with analytic connection coefficients; valid away
    from the poles.  Not exposed through the CLI scenario surface.
    """
    return ManifoldModel(
        dim=2,
        metric_at=_sphere_metric,
        christoffel_at=_sphere_christoffels,
        is_flat=False,
        angle_coords=(1,),
        coord_names=("polar", "azimuth"),
        name="sphere",
    )


def wrap_angle(theta):
    """Wrap angles into (-pi, pi] for output formatting."""
    return np.remainder(np.asarray(theta, dtype=float) - np.pi, -2.0 * np.pi) + np.pi
