"""Gaussian-bell field model and quadrature over the sensing rectangle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConfigError, QuadratureError

#: squared spread of the reference bell (length units squared)
DEFAULT_SPREAD = 4.0
DEFAULT_RESOLUTION = 64


@dataclass(frozen=True)
class FieldParams:
    mu: float
    xc: float
    yc: float

    def __post_init__(self):
        vals = (self.mu, self.xc, self.yc)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"field parameters must be finite, got {vals}")
        if self.mu <= 0:
            raise ConfigError(f"field strength must be positive, got {self.mu}", field="mu")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.xc, self.yc], dtype=float)

    @classmethod
    def from_array(cls, theta) -> "FieldParams":
        mu, xc, yc = (float(v) for v in theta)
        return cls(mu, xc, yc)


@dataclass(frozen=True)
class Region:
    x_min: float = 0.0
    x_max: float = 8.0
    y_min: float = 0.0
    y_max: float = 8.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigError(f"degenerate region {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


def bell_derivatives(theta, x, y, spread=DEFAULT_SPREAD, order=2):
    """Value, parameter gradient and parameter Hessian of the bell at points.

    Parameters
    ----------
    theta : array-like of shape (3,)
        ``(mu, xc, yc)``.
    x, y : ndarray of shape (K,)
        Evaluation points.
    order : int
        0 returns only values, 1 adds the (K, 3) gradient, 2 adds the
        (K, 3, 3) Hessian.
    """
    mu, xc, yc = theta
    dx = np.asarray(x, dtype=float) - xc
    dy = np.asarray(y, dtype=float) - yc
    shape = np.exp(-(dx * dx + dy * dy) / (2.0 * spread))
    g = mu * shape
    if order == 0:
        return g
    ux = dx / spread
    uy = dy / spread
    grad = np.empty(g.shape + (3,))
    # d/dmu is taken from the shape factor directly so mu -> 0 stays finite
    grad[..., 0] = shape
    grad[..., 1] = g * ux
    grad[..., 2] = g * uy
    if order == 1:
        return g, grad
    hess = np.empty(g.shape + (3, 3))
    hess[..., 0, 0] = 0.0
    hess[..., 0, 1] = hess[..., 1, 0] = shape * ux
    hess[..., 0, 2] = hess[..., 2, 0] = shape * uy
    hess[..., 1, 1] = g * (ux * ux - 1.0 / spread)
    hess[..., 2, 2] = g * (uy * uy - 1.0 / spread)
    hess[..., 1, 2] = hess[..., 2, 1] = g * ux * uy
    return g, grad, hess


@dataclass(frozen=True)
class GaussianBellField:
    """``mu * exp(-((x - xc)**2 + (y - yc)**2) / (2 * spread))``.

    The spread is known and never estimated.
    """

    params: FieldParams
    spread: float = DEFAULT_SPREAD

    def __post_init__(self):
        if not (self.spread > 0 and math.isfinite(self.spread)):
            raise ConfigError(f"spread must be positive, got {self.spread}", field="spread")

    @property
    def theta(self) -> np.ndarray:
        return self.params.as_array()

    def with_params(self, params) -> "GaussianBellField":
        if not isinstance(params, FieldParams):
            params = FieldParams.from_array(params)
        return GaussianBellField(params, self.spread)

    def __call__(self, x, y):
        return self.eval(x, y)

    def eval(self, x, y):
        return bell_derivatives(self.theta, x, y, self.spread, order=0)

    def grad_theta(self, x, y) -> np.ndarray:
        """Gradient with respect to ``(mu, xc, yc)``, shape ``x.shape + (3,)``."""
        return bell_derivatives(self.theta, x, y, self.spread, order=1)[1]

    def hess_theta(self, x, y) -> np.ndarray:
        return bell_derivatives(self.theta, x, y, self.spread, order=2)[2]


@lru_cache(maxsize=32)
def _gauss_legendre(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def region_nodes(region: Region, resolution=DEFAULT_RESOLUTION):
    """Tensor-product Gauss-Legendre nodes ``(X, Y)`` and weights ``W`` on the region."""
    if isinstance(resolution, (tuple, list)):
        nx, ny = resolution
    else:
        nx = ny = resolution
    if nx < 2 or ny < 2:
        raise ConfigError(f"quadrature resolution must be >= 2 per axis, got {resolution}",
                          field="resolution")
    tx, wx = _gauss_legendre(int(nx))
    ty, wy = _gauss_legendre(int(ny))
    hx = 0.5 * (region.x_max - region.x_min)
    hy = 0.5 * (region.y_max - region.y_min)
    xs = region.x_min + hx * (tx + 1.0)
    ys = region.y_min + hy * (ty + 1.0)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(wx * hx, wy * hy)
    return X, Y, W


def integrate_over_region(f, region: Region, resolution=DEFAULT_RESOLUTION) -> float:
    """Integrate ``f(X, Y)`` over ``region`` by tensor Gauss-Legendre quadrature.

    ``f`` receives 2-D node arrays and must return values of the same shape.
    """
    X, Y, W = region_nodes(region, resolution)
    values = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        point = (float(X[i, j]), float(Y[i, j]))
        raise QuadratureError(f"integrand is not finite at (x, y) = {point}", point=point)
    # fixed pairwise reduction order over the flattened node array
    return float(np.sum(values * W))
