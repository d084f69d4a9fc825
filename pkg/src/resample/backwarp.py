"""
Back-warping of sensor outputs onto a uniform grid.

An image-to-image model run on a deformed sensor produces one value per
deformed pixel A_k. To compare it with a uniform ground truth, the centers of
a uniform target grid are pulled back through phi^{-1}, and each takes the
value of the uniform pixel U_k that contains its pre-image (nearest
neighbour). The result has constant regions matching the pixel footprints.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..layout.deformation import LayoutParams, deform_inverse
from ..utils.errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelImage:
    """Per-pixel values indexed [x, y].

    values: (width, height, 3) RGB triples or (width, height) integer labels
    class_count: Optional number of classes; labels must lie in [0, class_count)
    """

    values: np.ndarray
    class_count: Optional[int] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim not in (2, 3) or (values.ndim == 3 and values.shape[2] != 3):
            raise DomainError(f"label image must be (W, H) or (W, H, 3), got {values.shape}")
        if 0 in values.shape[:2]:
            raise DomainError("label image dimensions must be positive")
        if values.ndim == 2:
            if not np.issubdtype(values.dtype, np.integer):
                raise DomainError("class labels must be integers")
            if values.min() < 0:
                raise DomainError("class labels must be non-negative")
            if self.class_count is not None and values.max() >= self.class_count:
                raise DomainError(f"class label {int(values.max())} outside [0, {self.class_count})")
        object.__setattr__(self, "values", values)

    @property
    def width(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def is_labels(self):
        return self.values.ndim == 2

    @classmethod
    def from_raster(cls, raster, class_count=None):
        """Build from a (row, column) raster as read from an image file."""
        return cls(np.swapaxes(np.asarray(raster), 0, 1), class_count)

    def to_raster(self):
        """(height, width[, 3]) array for writing as an image."""
        return np.swapaxes(self.values, 0, 1)


def cell_centers(count):
    """Centers -1 + (2i + 1) / count of a uniform 1-D grid over [-1, 1]."""
    return -1.0 + (2.0 * np.arange(count) + 1.0) / count


def containing_pixel(u, count):
    """Index of the uniform interval containing each coordinate.

    Intervals are half-open [lo, hi) except the last, which is closed.
    """
    index = np.floor((u + 1.0) * 0.5 * count).astype(np.int64)
    return np.clip(index, 0, count - 1)


def backwarp(deformed, params, target_w, target_h, return_index=False):
    """Resample a deformed-sensor output onto a uniform target grid.

    Args:
        deformed: LabelImage of size r1 x r2
        params: LayoutParams of the sensor that produced it
        target_w: Target width, at least deformed.width
        target_h: Target height, at least deformed.height
        return_index: Also return the (target_w, target_h, 2) source pixel map

    Returns:
        LabelImage of size target_w x target_h, and the index map if requested
    """
    if target_w < deformed.width or target_h < deformed.height:
        raise DomainError(f"target {target_w}x{target_h} is smaller than the "
                          f"sensor {deformed.width}x{deformed.height}")

    x, y = np.meshgrid(cell_centers(target_w), cell_centers(target_h), indexing="ij")
    u = deform_inverse(np.stack([x, y], axis=-1), params)
    k1 = containing_pixel(u[..., 0], deformed.width)
    k2 = containing_pixel(u[..., 1], deformed.height)

    result = LabelImage(deformed.values[k1, k2], deformed.class_count)
    logger.debug(f"Back-warped {deformed.width}x{deformed.height} -> {target_w}x{target_h} "
                 f"({params.kind.value}, theta={params.theta})")
    if return_index:
        return result, np.stack([k1, k2], axis=-1)
    return result


def upsample_nearest(image, target_w, target_h):
    """Back-warp under the uniform layout, i.e. nearest-neighbour upsampling."""
    return backwarp(image, LayoutParams.identity(), target_w, target_h)


def region_areas(index_map, r1, r2):
    """Area in S covered by each source pixel, from a back-warp index map."""
    target_w, target_h = index_map.shape[:2]
    flat = index_map[..., 0] * r2 + index_map[..., 1]
    counts = np.bincount(flat.ravel(), minlength=r1 * r2).reshape(r1, r2)
    return counts * (4.0 / (target_w * target_h))


def box_downsample(values, r1, r2):
    """Average (W, H, ...) values over uniform r1 x r2 blocks.

    This is the exact uniform-pixel integral of a piecewise-constant raster.
    """
    values = np.asarray(values, dtype=np.float64)
    width, height = values.shape[:2]
    if width % r1 or height % r2:
        raise DomainError(f"{width}x{height} raster does not divide into {r1}x{r2} pixels")
    blocks = values.reshape((r1, width // r1, r2, height // r2) + values.shape[2:])
    return blocks.mean(axis=(1, 3))
