"""
Layout export: SVG drawings of deformed pixel grids and JSON parameter files.
"""

import json
import logging
from pathlib import Path

import numpy as np
import svgwrite

from .deformation import LayoutKind, LayoutParams, deform, deform_inverse, jacobian_det
from .grid import SensorGrid
from ..utils.errors import DomainError

logger = logging.getLogger(__name__)

SAMPLES_PER_EDGE = 32

COLOR_LOW = (0xff, 0xff, 0xcc)
COLOR_HIGH = (0xbb, 0x55, 0x00)


def deformed_grid_lines(grid, params, samples_per_edge=SAMPLES_PER_EDGE):
    """Polylines phi(grid lines of U, theta).

    Returns:
        List of arrays of shape (M, 2); first the R1 + 1 lines of constant
        first coordinate, then the R2 + 1 lines of constant second coordinate.
    """
    lines = []
    for axis, count_along in ((0, grid.r2), (1, grid.r1)):
        along = np.linspace(-1.0, 1.0, count_along * (samples_per_edge - 1) + 1)
        for position in grid.line_positions(axis):
            points = np.empty((along.size, 2))
            points[:, axis] = position
            points[:, 1 - axis] = along
            lines.append(deform(points, params))
    return lines


def pixel_density_map(params, resolution=64):
    """Relative pixel density on a uniform raster over S.

    The density at q is 1 / |det J_phi(phi^{-1}(q))|, i.e. how many deformed
    pixels fit where a uniform pixel would; 1 everywhere for the identity.

    Returns:
        Array of shape (resolution, resolution) indexed [row (second coord), column]
    """
    centers = -1.0 + (2.0 * np.arange(resolution) + 1.0) / resolution
    qx, qy = np.meshgrid(centers, centers)
    q = np.stack([qx, qy], axis=-1)
    u = deform_inverse(q, params)
    return 1.0 / jacobian_det(u, params)


def _fill_color(fraction):
    fraction = float(np.clip(fraction, 0.0, 1.0))
    color = [COLOR_LOW[k] + int(fraction * (COLOR_HIGH[k] - COLOR_LOW[k])) for k in range(3)]
    return '#' + ''.join("%02x" % c for c in color)


def export_layout_svg(path, grid, params, size=512, margin=8, stroke="#222222",
                      stroke_width=1.0, density_resolution=0):
    """Draw the deformed grid as an SVG file.

    Args:
        path: Output file
        grid: SensorGrid
        params: LayoutParams
        size: Canvas edge length in px for S
        margin: Border around S in px
        stroke: Grid line color
        stroke_width: Grid line width
        density_resolution: If > 0, shade the background with the pixel
            density map at this resolution

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extent = size + 2 * margin

    def to_canvas(points):
        # The second coordinate grows downwards, matching image rows
        xy = margin + (points + 1.0) * 0.5 * size
        return [(round(float(x), 3), round(float(y), 3)) for x, y in xy]

    drawing = svgwrite.Drawing(str(path), size=(f"{extent}px", f"{extent}px"))
    drawing.add(drawing.rect((0, 0), (extent, extent), fill="white"))

    if density_resolution > 0:
        density = pixel_density_map(params, density_resolution)
        lo, hi = density.min(), density.max()
        span = hi - lo if hi - lo > 1e-12 else 1.0
        cell = size / density_resolution
        for row in range(density_resolution):
            for col in range(density_resolution):
                drawing.add(drawing.rect(
                    insert=(round(margin + col * cell, 3), round(margin + row * cell, 3)),
                    size=(round(cell, 3), round(cell, 3)),
                    fill=_fill_color((density[row, col] - lo) / span),
                ))

    for line in deformed_grid_lines(grid, params):
        drawing.add(drawing.polyline(to_canvas(line), stroke=stroke,
                                     stroke_width=stroke_width, fill="none"))

    drawing.save()
    logger.info(f"Layout SVG written to {path}")
    return path


def layout_to_dict(grid, params):
    """JSON-ready layout: kind, theta, theta_raw and the grid resolution."""
    data = params.to_dict()
    data.update({"r1": grid.r1, "r2": grid.r2})
    return data


def layout_from_dict(data):
    """Inverse of layout_to_dict; theta_raw is authoritative."""
    try:
        grid = SensorGrid(int(data["r1"]), int(data["r2"]))
        params = LayoutParams.from_raw(LayoutKind.parse(data["kind"]), data["theta_raw"])
    except KeyError as e:
        raise DomainError(f"layout record is missing field {e}")
    return grid, params


def save_layout_json(path, grid, params):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(layout_to_dict(grid, params), f, indent=4, sort_keys=True)
    return path


def load_layout_json(path):
    with open(path, "r") as f:
        return layout_from_dict(json.load(f))
