"""
Sensor grid, uniform pixels and pixel boundary parameterisations.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Tuple

import numpy as np

from .deformation import LayoutParams, deform, deform_dtheta, jacobian
from ..utils.errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

DEGENERATE_TANGENT = 1e-12


@dataclass(frozen=True)
class SensorGrid:
    """Pixel resolution (r1 horizontal, r2 vertical) over S = [-1, 1]^2."""

    r1: int
    r2: int

    def __post_init__(self):
        for name in ("r1", "r2"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))

    @classmethod
    def parse(cls, text):
        """Parse '4x4' style sizes."""
        try:
            r1, r2 = (int(v) for v in str(text).lower().split("x"))
        except ValueError:
            raise DomainError(f"grid size must look like R1xR2, got '{text}'")
        return cls(r1, r2)

    @property
    def shape(self):
        return (self.r1, self.r2)

    @property
    def pixel_area(self):
        return 4.0 / (self.r1 * self.r2)

    def indices(self):
        """All pixel indices (k1, k2) in row-major order over k1."""
        return [(k1, k2) for k1 in range(self.r1) for k2 in range(self.r2)]

    def line_positions(self, axis):
        """Coordinates of the uniform grid lines along one axis (R + 1 values)."""
        count = self.r1 if axis == 0 else self.r2
        return -1.0 + 2.0 * np.arange(count + 1) / count

    def __str__(self):
        return f"{self.r1}x{self.r2}"


class PixelBounds(NamedTuple):
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def size(self):
        return (self.x1 - self.x0, self.y1 - self.y0)


def uniform_pixel_bounds(grid, k):
    """Return the uniform pixel U_k.

    Raises:
        DomainError: if k is outside the grid
    """
    k1, k2 = (int(v) for v in k)
    if not (0 <= k1 < grid.r1 and 0 <= k2 < grid.r2):
        raise DomainError(f"pixel index {k} outside grid {grid}")
    return PixelBounds(
        x0=-1.0 + 2.0 * k1 / grid.r1,
        x1=-1.0 + 2.0 * (k1 + 1) / grid.r1,
        y0=-1.0 + 2.0 * k2 / grid.r2,
        y1=-1.0 + 2.0 * (k2 + 1) / grid.r2,
    )


@dataclass(frozen=True)
class PixelRegion:
    """A pixel A_k = phi(U_k, theta): its index, uniform bounds and layout."""

    index: Tuple[int, int]
    uniform_bounds: PixelBounds
    layout: LayoutParams


def pixel_region(grid, k, params):
    """The deformed pixel A_k of a grid under the given layout."""
    return PixelRegion(index=(int(k[0]), int(k[1])),
                       uniform_bounds=uniform_pixel_bounds(grid, k),
                       layout=params)


class Edge(Enum):
    """Pixel sides, listed in counter-clockwise traversal order."""

    BOTTOM = "bottom"
    RIGHT = "right"
    TOP = "top"
    LEFT = "left"


# Bottom is the side with the smaller second coordinate
_EDGE_ENDPOINTS = {
    Edge.BOTTOM: (("x0", "y0"), ("x1", "y0")),
    Edge.RIGHT: (("x1", "y0"), ("x1", "y1")),
    Edge.TOP: (("x1", "y1"), ("x0", "y1")),
    Edge.LEFT: (("x0", "y1"), ("x0", "y0")),
}


@dataclass(frozen=True)
class BoundaryParam:
    """One side of a pixel boundary, gamma(t) = start + t * delta, t in [0, 1].

    Traversal is counter-clockwise, so (r2', -r1') points out of the pixel.
    """

    edge: Edge
    start: Tuple[float, float]
    delta: Tuple[float, float]
    layout: LayoutParams

    def gamma(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.asarray(self.start) + t[..., None] * np.asarray(self.delta)

    def gamma_dot(self):
        return np.asarray(self.delta, dtype=np.float64)

    def point(self, t):
        """r(t, theta) = phi(gamma(t), theta)."""
        return deform(self.gamma(t), self.layout)

    def tangent(self, t):
        """r'(t, theta) = J_phi(gamma(t)) gamma'."""
        return jacobian(self.gamma(t), self.layout) @ self.gamma_dot()

    def scaled_normal(self, t):
        """Outward normal scaled by the line element, (r2', -r1')."""
        tangent = self.tangent(t)
        return np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)

    def line_element(self, t):
        """||r'(t, theta)||, so that ds = line_element * dt."""
        return np.linalg.norm(self.tangent(t), axis=-1)

    def normal(self, t):
        """Outward unit normal n(t, theta).

        Raises:
            ConvergenceError: if the tangent degenerates
        """
        length = self.line_element(t)
        if np.any(length < DEGENERATE_TANGENT):
            raise ConvergenceError("degenerate boundary tangent; theta at the edge of its domain")
        return self.scaled_normal(t) / length[..., None]

    def point_velocity(self, t):
        """dr/dtheta, shape (..., 2, 2) with column j = dr/dtheta_j."""
        return deform_dtheta(self.gamma(t), self.layout)

    def normal_velocity(self, t):
        """<dr/dtheta_j, n> ||r'||, shape (..., 2), without dividing by ||r'||."""
        velocity = self.point_velocity(t)
        return np.einsum("...ij,...i->...j", velocity, self.scaled_normal(t))


def boundary_param(region, edge):
    """Parameterisation of one side of a pixel boundary."""
    edge = Edge(edge)
    bounds = region.uniform_bounds._asdict()
    (sx, sy), (ex, ey) = _EDGE_ENDPOINTS[edge]
    start = (bounds[sx], bounds[sy])
    end = (bounds[ex], bounds[ey])
    delta = (end[0] - start[0], end[1] - start[1])
    return BoundaryParam(edge=edge, start=start, delta=delta, layout=region.layout)
