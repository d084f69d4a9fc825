"""
Radiance fields: point-sampleable RGB functions on the sensor domain.

A field is treated as a black box by the sensor and the gradient code; only
point values are ever requested. Fields are immutable and safe to sample
from several threads at once.
"""

import logging
from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .image_io import SourceImage, load_image
from ..layout.deformation import check_points
from ..utils.errors import DomainError

logger = logging.getLogger(__name__)


class FieldKind(Enum):
    IMAGE_BACKED = "image"
    CONSTANT = "constant"
    LINEAR_RAMP = "ramp"
    GAUSSIAN_BLOB = "blob"
    CHECKERBOARD = "checker"


def _rgb(values, name):
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    if arr.shape != (3,) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must be one or three values in [0, 1], got {values}")
    return arr


class RadianceField(ABC):
    """Continuous RGB signal L on S.

    sample() accepts points of shape (..., 2) and returns
    batch_shape + points.shape[:-1] + (3,).
    """

    kind = None
    batch_shape = ()

    def sample(self, points):
        """Evaluate the field; points within 1e-9 outside S are clamped."""
        return self._evaluate(check_points(points))

    @abstractmethod
    def _evaluate(self, p):
        """Evaluate at validated points of shape (..., 2)."""

    def describe(self):
        return {"kind": self.kind.value}


class ConstantField(RadianceField):
    kind = FieldKind.CONSTANT

    def __init__(self, color=(0.5, 0.5, 0.5)):
        self.color = _rgb(color, "color")

    def _evaluate(self, p):
        return np.broadcast_to(self.color, p.shape[:-1] + (3,)).copy()

    def describe(self):
        return {"kind": self.kind.value, "color": self.color.tolist()}


class LinearRampField(RadianceField):
    """Gray ramp along one axis: low at coordinate -1, high at +1."""

    kind = FieldKind.LINEAR_RAMP

    def __init__(self, axis=0, low=0.0, high=1.0):
        if axis not in (0, 1):
            raise DomainError(f"ramp axis must be 0 or 1, got {axis}")
        if not (0.0 <= low <= 1.0 and 0.0 <= high <= 1.0):
            raise DomainError("ramp end values must lie in [0, 1]")
        self.axis = axis
        self.low = float(low)
        self.high = float(high)

    def _evaluate(self, p):
        value = self.low + (self.high - self.low) * (p[..., self.axis] + 1.0) * 0.5
        return np.repeat(value[..., None], 3, axis=-1)

    def describe(self):
        return {"kind": self.kind.value, "axis": self.axis, "low": self.low, "high": self.high}


class GaussianBlobField(RadianceField):
    """background + (color - background) * exp(-|p - center|^2 / (2 sigma^2))."""

    kind = FieldKind.GAUSSIAN_BLOB

    def __init__(self, center=(0.0, 0.0), sigma=0.4, color=(1.0, 1.0, 1.0), background=(0.0, 0.0, 0.0)):
        if sigma <= 0.0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        self.center = np.asarray(center, dtype=np.float64).reshape(2)
        self.sigma = float(sigma)
        self.color = _rgb(color, "color")
        self.background = _rgb(background, "background")

    def _evaluate(self, p):
        d2 = np.sum((p - self.center) ** 2, axis=-1)
        weight = np.exp(-d2 / (2.0 * self.sigma ** 2))[..., None]
        return self.background + (self.color - self.background) * weight

    def describe(self):
        return {"kind": self.kind.value, "center": self.center.tolist(), "sigma": self.sigma,
                "color": self.color.tolist(), "background": self.background.tolist()}


class CheckerboardField(RadianceField):
    """Band-limited checkerboard 0.5 + 0.5 sin(pi f p1) sin(pi f p2), mapped to [low, high].

    frequency is the number of checks per unit length; smooth, so it can be
    used with finite-difference oracles.
    """

    kind = FieldKind.CHECKERBOARD

    def __init__(self, frequency=2.0, low=0.0, high=1.0):
        if frequency <= 0.0:
            raise DomainError(f"frequency must be positive, got {frequency}")
        self.frequency = float(frequency)
        self.low = float(low)
        self.high = float(high)

    def _evaluate(self, p):
        w = np.pi * self.frequency
        value = 0.5 + 0.5 * np.sin(w * p[..., 0]) * np.sin(w * p[..., 1])
        value = self.low + (self.high - self.low) * value
        return np.repeat(value[..., None], 3, axis=-1)

    def describe(self):
        return {"kind": self.kind.value, "frequency": self.frequency, "low": self.low, "high": self.high}


def bilinear_sample(pixels, p):
    """Bilinear interpolation with clamp-to-edge addressing.

    Args:
        pixels: Array (..., H, W, C); leading dimensions are a batch
        p: Points in S, shape (..., 2)

    Returns:
        Array batch + p.shape[:-1] + (C,)

    Texel (i, j) covers [i, i+1] x [j, j+1] in image coordinates, so sampling
    at a texel center returns the texel value exactly.
    """
    height, width = pixels.shape[-3], pixels.shape[-2]
    x = (p[..., 0] + 1.0) * 0.5 * width - 0.5
    y = (p[..., 1] + 1.0) * 0.5 * height - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa = np.clip(x0, 0, width - 1)
    xb = np.clip(x0 + 1, 0, width - 1)
    ya = np.clip(y0, 0, height - 1)
    yb = np.clip(y0 + 1, 0, height - 1)

    top = (1.0 - fx) * pixels[..., ya, xa, :] + fx * pixels[..., ya, xb, :]
    bottom = (1.0 - fx) * pixels[..., yb, xa, :] + fx * pixels[..., yb, xb, :]
    return (1.0 - fy) * top + fy * bottom


INTERPOLATIONS = ("bilinear", "cubic")


def spline_coefficients(pixels):
    """Cubic B-spline coefficients of every image plane of (..., H, W, C)."""
    coefficients = np.empty_like(pixels)
    planes = pixels.reshape((-1,) + pixels.shape[-3:])
    out = coefficients.reshape(planes.shape)
    for b in range(planes.shape[0]):
        for c in range(planes.shape[-1]):
            out[b, :, :, c] = ndimage.spline_filter(planes[b, :, :, c], order=3, mode="nearest")
    return coefficients


def cubic_sample(coefficients, p):
    """C2 cubic-spline interpolation through the texel centers.

    Args:
        coefficients: Output of spline_coefficients, shape (..., H, W, C)
        p: Points in S, shape (..., 2)

    Returns:
        Array batch + p.shape[:-1] + (C,)
    """
    height, width, channels = coefficients.shape[-3:]
    x = (p[..., 0].ravel() + 1.0) * 0.5 * width - 0.5
    y = (p[..., 1].ravel() + 1.0) * 0.5 * height - 0.5
    planes = coefficients.reshape((-1,) + coefficients.shape[-3:])
    values = np.empty((planes.shape[0], x.size, channels))
    for b in range(planes.shape[0]):
        for c in range(channels):
            values[b, :, c] = ndimage.map_coordinates(planes[b, :, :, c], [y, x], order=3, mode="nearest",
                                                      prefilter=False)
    return values.reshape(coefficients.shape[:-3] + p.shape[:-1] + (channels,))


def _interpolator(pixels, interpolation):
    if interpolation not in INTERPOLATIONS:
        raise DomainError(f"interpolation must be one of {', '.join(INTERPOLATIONS)}, got '{interpolation}'")
    if interpolation == "cubic":
        coefficients = spline_coefficients(pixels)
        return lambda p: cubic_sample(coefficients, p)
    return lambda p: bilinear_sample(pixels, p)


class ImageField(RadianceField):
    """Radiance backed by one image; S is stretched over the full image rectangle."""

    kind = FieldKind.IMAGE_BACKED

    def __init__(self, image, interpolation="bilinear"):
        if not isinstance(image, SourceImage):
            image = SourceImage(image)
        self.image = image
        self.interpolation = interpolation
        self._pixels = image.to_rgb()
        self._sample = _interpolator(self._pixels, interpolation)

    @classmethod
    def from_file(cls, path, interpolation="bilinear"):
        return cls(load_image(path), interpolation)

    def _evaluate(self, p):
        return self._sample(p)

    def describe(self):
        return {"kind": self.kind.value, "width": self.image.width, "height": self.image.height,
                "channels": self.image.channels, "interpolation": self.interpolation}


class ImageStackField(RadianceField):
    """A batch of equally sized images sampled at shared points.

    Used to push a training mini-batch through the sensor in one pass; the
    result carries a leading batch dimension.
    """

    kind = FieldKind.IMAGE_BACKED

    def __init__(self, images, interpolation="bilinear"):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[..., None]
        if images.ndim != 4 or images.shape[-1] not in (1, 3):
            raise DomainError(f"image stack must be (B, H, W[, 1|3]), got {images.shape}")
        if images.shape[-1] == 1:
            images = np.repeat(images, 3, axis=-1)
        if images.min(initial=0.0) < 0.0 or images.max(initial=0.0) > 1.0:
            raise DomainError("image stack values must lie in [0, 1]")
        self._pixels = images
        self.batch_shape = (images.shape[0],)
        self.interpolation = interpolation
        self._sample = _interpolator(images, interpolation)

    def _evaluate(self, p):
        return self._sample(p)

    def describe(self):
        return {"kind": self.kind.value, "batch": self.batch_shape[0], "width": self._pixels.shape[2],
                "height": self._pixels.shape[1], "interpolation": self.interpolation}


def _floats(text, count, name):
    try:
        values = [float(v) for v in text.split(",")] if text else []
    except ValueError:
        raise DomainError(f"{name} expects numbers, got '{text}'")
    if count is not None and len(values) not in (0, count):
        raise DomainError(f"{name} expects {count} comma-separated values, got '{text}'")
    return values


def parse_field(descriptor):
    """Build a field from a command-line descriptor.

    Accepted forms: constant:r,g,b | ramp[:axis] | blob[:cx,cy,sigma] |
    checker[:frequency] | path to a PNG/PPM/PGM image.
    """
    name, _, args = str(descriptor).partition(":")
    name = name.strip().lower()
    if name == "constant":
        values = _floats(args, None, "constant") or [0.5]
        return ConstantField(values)
    if name == "ramp":
        return LinearRampField(axis=int(args) if args else 0)
    if name == "blob":
        values = _floats(args, 3, "blob")
        if values:
            return GaussianBlobField(center=values[:2], sigma=values[2])
        return GaussianBlobField()
    if name == "checker":
        values = _floats(args, 1, "checker")
        return CheckerboardField(frequency=values[0] if values else 2.0)

    path = Path(descriptor)
    if path.suffix.lower() in (".png", ".ppm", ".pgm"):
        return ImageField.from_file(path)
    raise DomainError(f"Unknown field descriptor '{descriptor}'")
