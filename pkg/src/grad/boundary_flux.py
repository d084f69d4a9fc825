"""
Boundary flux integrals over deformed pixel edges.

For one side of a pixel, with r(t) = phi(gamma(t), theta), the flux of a
function h is int_0^1 h(r(t)) <dr/dtheta_j, (r2', -r1')> dt, which equals
the line integral of h <dr/dtheta_j, n> ds without dividing by ||r'||.

Every interior edge is shared by two pixels with opposite orientation. Edges
are identified by a canonical key so both pixels see the same samples:

    ('v', i, k2)  the edge on the i-th vertical grid line, in pixel row k2
    ('h', k1, j)  the edge on the j-th horizontal grid line, in pixel column k1

The canonical traversal is the one of the pixel on the lower-index side
(its RIGHT or TOP edge); the pixel on the other side sees the negated flux.
"""

import logging
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from ..layout.grid import Edge, boundary_param
from ..sensor.sampling import edge_quadrature
from ..sensor.simulation import SensorResponse

logger = logging.getLogger(__name__)


def canonical_edge(k, edge):
    """Map a pixel side to (edge key, orientation sign)."""
    k1, k2 = k
    edge = Edge(edge)
    if edge is Edge.RIGHT:
        return ("v", k1 + 1, k2), 1.0
    if edge is Edge.LEFT:
        return ("v", k1, k2), -1.0
    if edge is Edge.TOP:
        return ("h", k1, k2 + 1), 1.0
    return ("h", k1, k2), -1.0


def edge_owner(key):
    """The pixel and side whose traversal is canonical for an edge key."""
    axis, i, j = key
    if axis == "v":
        return (i - 1, j), Edge.RIGHT
    return (i, j - 1), Edge.TOP


def is_outer_edge(key, grid):
    """True for edges on the sensor boundary; their flux is zero."""
    axis, i, j = key
    if axis == "v":
        return i in (0, grid.r1)
    return j in (0, grid.r2)


def unique_edges(grid, include_outer=False):
    """All edge keys of the grid, each exactly once."""
    keys = [("v", i, k2) for i in range(grid.r1 + 1) for k2 in range(grid.r2)]
    keys += [("h", k1, j) for k1 in range(grid.r1) for j in range(grid.r2 + 1)]
    if include_outer:
        return keys
    return [key for key in keys if not is_outer_edge(key, grid)]


@dataclass(frozen=True)
class EdgeFlux:
    """Flux integrals of one pixel side.

    flux_g: (2,) volume flux per theta component (integrand 1)
    reference: batch + (3,) radiance at the first boundary sample
    deviation: batch + (3, 2) flux of W (L - reference)

    flux_f = W * reference (x) flux_g + deviation. Keeping the split lets
    constant fields cancel exactly in the pixel derivative.
    """

    key: Tuple
    flux_g: np.ndarray
    reference: np.ndarray
    deviation: np.ndarray
    weight: float = 1.0

    @property
    def flux_f(self):
        return self.weight * self.reference[..., None] * self.flux_g + self.deviation

    def negated(self):
        """The same edge seen from the neighbouring pixel."""
        return replace(self, flux_g=-self.flux_g, deviation=-self.deviation)


def canonical_segment(region, key, sign):
    """Start and delta of the canonical traversal of a region's side."""
    b = region.uniform_bounds
    if key[0] == "v":
        x = b.x1 if sign > 0 else b.x0
        return (x, b.y0), (0.0, b.y1 - b.y0)
    y = b.y1 if sign > 0 else b.y0
    return (b.x1, y), (b.x0 - b.x1, 0.0)


def edge_flux(region, edge, field, params, cfg, response=None):
    """Flux integrals of W L and of 1 across one side of a deformed pixel.

    Args:
        region: PixelRegion
        edge: Edge (side of the region)
        field: RadianceField (may be batched); only point values are used
        params: LayoutParams the flux is taken under
        cfg: SamplingConfig (boundary_samples, seed, jitter, rule)
        response: SensorResponse

    Returns:
        EdgeFlux oriented outward for this region

    Raises:
        ConvergenceError: if the boundary tangent degenerates
    """
    response = response or SensorResponse()
    key, sign = canonical_edge(region.index, edge)
    start, delta = canonical_segment(region, key, sign)
    u, quad_weights = edge_quadrature(key, start, delta, params=params, cfg=cfg)
    t = u if sign > 0 else 1.0 - u

    side = boundary_param(replace(region, layout=params), edge)
    # Called for its check only: raises if the tangent degenerates
    side.normal(t)
    velocity = side.normal_velocity(t)
    radiance = field.sample(side.point(t))

    reference = radiance[..., 0, :]
    weighted = quad_weights[:, None] * velocity
    flux_g = weighted.sum(axis=0)
    deviation = response.weight * np.einsum("...mc,mj->...cj", radiance - reference[..., None, :], weighted)
    return EdgeFlux(key=key, flux_g=flux_g, reference=reference, deviation=deviation,
                    weight=response.weight)
