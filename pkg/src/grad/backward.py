"""
Backward pass: derivatives of pixel values with respect to the layout.

With f_k = int_{A_k} W L and g_k = vol(A_k), the Reynolds transport theorem
turns both theta derivatives into boundary fluxes (W does not depend on
theta, so there is no interior term). The pixel value I_k = f_k / g_k then
follows from the quotient rule, dI = (f' - I g') / g.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .boundary_flux import canonical_edge, edge_flux, edge_owner, unique_edges
from ..layout.deformation import LayoutKind
from ..layout.grid import Edge, pixel_region
from ..utils.errors import ConvergenceError, DomainError
from ..utils.parallel import chunk, parallel_map, resolve_threads

logger = logging.getLogger(__name__)

# Deformed pixels below this estimated area make the quotient rule unstable
MIN_PIXEL_VOLUME = 1e-12


@dataclass(frozen=True)
class GradientRecord:
    """Result of one backward pass.

    dpixel_dtheta: batch + (r1, r2, 3, 2)
    dloss_dtheta: (2,)
    dloss_dtheta_raw: (2,), dloss_dtheta * (1 - theta^2)
    dvolume_dtheta: (r1, r2, 2)
    """

    dpixel_dtheta: np.ndarray
    dloss_dtheta: np.ndarray
    dloss_dtheta_raw: np.ndarray
    dvolume_dtheta: np.ndarray


def _interior_term(response):
    """Flux of W' over the region. W is constant, so it is zero."""
    dweight = response.dweight_dtheta()
    if np.any(dweight):
        raise DomainError("only theta-independent sensor responses are supported")
    return 0.0


def _pixel_derivative(pixel, volume, fluxes, weight):
    """Quotient rule for one pixel from its outward-oriented edge fluxes.

    Each flux contributes W (reference - I) (x) flux_g + deviation to f' - I g',
    so a constant field gives exactly zero.
    """
    if volume < MIN_PIXEL_VOLUME:
        raise ConvergenceError(f"deformed pixel volume {volume:.3e} is too small to differentiate")
    numerator = 0.0
    dvolume = np.zeros(2)
    for flux in fluxes:
        numerator = numerator + weight * (flux.reference - pixel)[..., None] * flux.flux_g + flux.deviation
        dvolume = dvolume + flux.flux_g
    return numerator / (weight * volume), dvolume


def dpixel_dtheta(region, field, params, cfg, forward_cache):
    """Derivative of one pixel value with respect to theta.

    Args:
        region: PixelRegion of the pixel
        field: RadianceField used in the forward pass
        params: LayoutParams
        cfg: SamplingConfig
        forward_cache: ForwardCache from simulate(..., return_cache=True)

    Returns:
        Array batch + (3, 2)
    """
    response = forward_cache.response
    _interior_term(response)
    k1, k2 = region.index
    fluxes = [edge_flux(region, edge, field, params, cfg, response) for edge in Edge]
    pixel = forward_cache.pixels[..., k1, k2, :]
    derivative, _ = _pixel_derivative(pixel, forward_cache.volume[k1, k2], fluxes, response.weight)
    return derivative


def _shared_fluxes(keys, grid, field, params, cfg, response):
    fluxes = {}
    for key in keys:
        owner, side = edge_owner(key)
        fluxes[key] = edge_flux(pixel_region(grid, owner, params), side, field, params, cfg, response)
    return fluxes


def _pixel_fluxes(grid, k, fluxes):
    """The four outward fluxes of pixel k from the canonical edge table.

    Edges on the sensor boundary do not move and are left out.
    """
    result = []
    for side in Edge:
        key, sign = canonical_edge(k, side)
        if key in fluxes:
            result.append(fluxes[key] if sign > 0 else fluxes[key].negated())
    return result


def backward(sensor_image, upstream, field, params, cfg, forward_cache, shared_edges=True, threads=1):
    """Chain an upstream gradient dLoss/dI through the sensor to theta.

    Args:
        sensor_image: SensorImage from the forward pass
        upstream: dLoss/dI, same shape as sensor_image.pixels
        field: RadianceField used in the forward pass
        params: LayoutParams used in the forward pass
        cfg: SamplingConfig used in the forward pass
        forward_cache: ForwardCache from the forward pass
        shared_edges: Evaluate every interior edge once and reuse it for
            both neighbours; otherwise every pixel integrates its own sides
        threads: Worker threads (0 = all cores)

    Returns:
        GradientRecord

    Raises:
        DomainError: if upstream does not match the sensor image
        ConvergenceError: on degenerate pixels or boundaries
    """
    grid = sensor_image.grid
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != sensor_image.pixels.shape:
        raise DomainError(f"upstream gradient has shape {upstream.shape}, "
                          f"expected {sensor_image.pixels.shape}")

    response = forward_cache.response
    _interior_term(response)
    batch = sensor_image.batch_shape
    dpixel = np.zeros(batch + (grid.r1, grid.r2, 3, 2))
    dvolume = np.zeros((grid.r1, grid.r2, 2))

    if params.kind is LayoutKind.IDENTITY:
        logger.debug("Identity layout, gradient is zero")
    else:
        if shared_edges:
            blocks = chunk(unique_edges(grid), resolve_threads(threads))
            parts = parallel_map(lambda keys: _shared_fluxes(keys, grid, field, params, cfg, response),
                                 blocks, threads)
            table = {}
            for part in parts:
                table.update(part)
            pixel_fluxes = lambda k: _pixel_fluxes(grid, k, table)
        else:
            pixel_fluxes = lambda k: [edge_flux(pixel_region(grid, k, params), side, field, params, cfg, response)
                                      for side in Edge]

        def column(k1):
            return [_pixel_derivative(forward_cache.pixels[..., k1, k2, :], forward_cache.volume[k1, k2],
                                      pixel_fluxes((k1, k2)), response.weight)
                    for k2 in range(grid.r2)]

        columns = parallel_map(column, range(grid.r1), threads)
        for k1, col in enumerate(columns):
            for k2, (derivative, volume_rate) in enumerate(col):
                dpixel[..., k1, k2, :, :] = derivative
                dvolume[k1, k2] = volume_rate

    dloss = np.tensordot(upstream, dpixel, axes=upstream.ndim)
    dloss_raw = dloss * params.dtheta_draw()
    logger.debug(f"Backward pass: dloss/dtheta={dloss.tolist()}, shared_edges={shared_edges}")
    return GradientRecord(dpixel_dtheta=dpixel, dloss_dtheta=dloss, dloss_dtheta_raw=dloss_raw,
                          dvolume_dtheta=dvolume)
