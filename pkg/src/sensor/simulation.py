"""
Sensor simulation module.
Computes pixel values of a deformed layout by change of variables over the
uniform pixels:

    I_k = int_{U_k} W L(phi(u)) |det J_phi(u)| du / int_{U_k} |det J_phi(u)| du

Numerator and denominator are estimated from one weighted sample set per
pixel (stratified or quadrature), which is kept for the backward pass.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .sampling import SamplingConfig, pixel_quadrature
from ..layout.deformation import deform, jacobian_det
from ..layout.grid import SensorGrid, uniform_pixel_bounds
from ..utils.errors import DomainError
from ..utils.parallel import chunk, parallel_map, resolve_threads

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensorResponse:
    """Constant pixel response W. It cancels in the pixel quotient."""

    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0.0:
            raise DomainError(f"sensor response must be positive, got {self.weight}")

    def dweight_dtheta(self):
        """The response does not depend on the layout."""
        return np.zeros(2)


@dataclass(frozen=True)
class SensorImage:
    """Simulated pixel values, indexed [k1, k2].

    pixels: batch + (r1, r2, 3)
    volumes: (r1, r2) estimated areas of the deformed pixels
    """

    grid: SensorGrid
    pixels: np.ndarray
    volumes: np.ndarray

    @property
    def volumes_sum(self):
        return float(self.volumes.sum())

    @property
    def batch_shape(self):
        return self.pixels.shape[:-3]

    def to_rgb_image(self):
        """Raster layout (row = k2, column = k1), shape batch + (r2, r1, 3)."""
        return np.swapaxes(self.pixels, -3, -2)


@dataclass
class ForwardCache:
    """Per-pixel quantities retained from the forward pass.

    quadrature: {k: PixelQuadrature} uniform-domain samples u and their weights
    weights: {k: |det J_phi(u)|} at those samples
    energy: batch + (r1, r2, 3), f = int W L |det J|
    volume: (r1, r2), g = int |det J|
    pixels: batch + (r1, r2, 3), f / g
    """

    grid: SensorGrid
    params: object
    cfg: SamplingConfig
    response: SensorResponse
    quadrature: dict
    weights: dict
    energy: np.ndarray
    volume: np.ndarray
    pixels: np.ndarray


def _simulate_rows(rows, field, grid, params, cfg, response):
    """Forward pass for a block of pixel columns k1 (all k2)."""
    area = grid.pixel_area
    keys = [(k1, k2) for k1 in rows for k2 in range(grid.r2)]
    quadrature = {k: pixel_quadrature(uniform_pixel_bounds(grid, k), cfg, k, params) for k in keys}
    ends = np.cumsum([len(quadrature[k]) for k in keys])
    samples = np.concatenate([quadrature[k].points for k in keys])
    jacobians = jacobian_det(samples, params)
    radiance = field.sample(deform(samples, params))

    batch = field.batch_shape
    pixels = np.empty(batch + (len(rows), grid.r2, 3))
    volume = np.empty((len(rows), grid.r2))
    weights = {}
    for index, (k, end) in enumerate(zip(keys, ends)):
        begin = end - len(quadrature[k])
        weights[k] = jacobians[begin:end]
        w = quadrature[k].weights * weights[k]
        values = radiance[..., begin:end, :]
        # Centered weighted mean: L_0 + sum w (L - L_0) / sum w. Identical to
        # sum w L / sum w, and exact for constant fields.
        reference = values[..., 0, :]
        total = w.sum()
        # Sums run over a contiguous last axis of this pixel only: same order for any block size
        weighted = np.moveaxis(w[:, None] * (values - reference[..., None, :]), -2, -1)
        deviation = np.ascontiguousarray(weighted).sum(axis=-1)
        row, k2 = divmod(index, grid.r2)
        pixels[..., row, k2, :] = reference + deviation / total
        volume[row, k2] = area * total

    energy = response.weight * pixels * volume[..., None]
    return quadrature, weights, energy, volume, pixels




def simulate(field, grid, params, cfg=None, response=None, threads=1, return_cache=False):
    """Simulate the sensor image of a radiance field under a pixel layout.

    Args:
        field: RadianceField (may be batched)
        grid: SensorGrid
        params: LayoutParams
        cfg: SamplingConfig (defaults if None)
        response: SensorResponse (constant W = 1 if None)
        threads: Worker threads over pixel columns (0 = all cores)
        return_cache: Also return the ForwardCache for the backward pass

    Returns:
        SensorImage, or (SensorImage, ForwardCache) if return_cache
    """
    cfg = cfg or SamplingConfig()
    response = response or SensorResponse()

    blocks = chunk(range(grid.r1), resolve_threads(threads))
    parts = parallel_map(lambda rows: _simulate_rows(rows, field, grid, params, cfg, response),
                         blocks, threads)

    quadrature, weights = {}, {}
    for part in parts:
        quadrature.update(part[0])
        weights.update(part[1])
    batch_axis = len(field.batch_shape)
    energy = np.concatenate([p[2] for p in parts], axis=batch_axis)
    volume = np.concatenate([p[3] for p in parts], axis=0)
    pixels = np.concatenate([p[4] for p in parts], axis=batch_axis)

    image = SensorImage(grid=grid, pixels=pixels, volumes=volume)
    logger.debug(f"Simulated {grid} sensor, kind={params.kind.value}, theta={params.theta}, "
                 f"volume sum={image.volumes_sum:.6f}")
    if not return_cache:
        return image

    cache = ForwardCache(grid=grid, params=params, cfg=cfg, response=response, quadrature=quadrature,
                         weights=weights, energy=energy, volume=volume, pixels=pixels)
    return image, cache


def pixel_volume(grid, k, params, cfg=None):
    """Estimated area of the deformed pixel A_k, int_{U_k} |det J_phi| du."""
    cfg = cfg or SamplingConfig()
    quad = pixel_quadrature(uniform_pixel_bounds(grid, k), cfg, k, params)
    return float(grid.pixel_area * np.sum(quad.weights * jacobian_det(quad.points, params)))
