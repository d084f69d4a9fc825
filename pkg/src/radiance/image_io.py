"""
Image loading and saving for radiance sources and sensor output dumps.
PNG and 8-bit binary PPM (P6) and PGM (P5) are decoded with Pillow; 16-bit
P5/P6 rasters are read with numpy.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..utils.errors import ImageFormatError

logger = logging.getLogger(__name__)


class ImageFormat(Enum):
    PNG = "PNG"
    PPM = "PPM"
    PGM = "PGM"

    @classmethod
    def from_path(cls, path):
        suffix = Path(path).suffix.lower().lstrip(".")
        try:
            return cls(suffix.upper())
        except ValueError:
            raise ImageFormatError(f"Cannot infer image format from '{path}'")

    @property
    def pillow_format(self):
        # Pillow decodes PGM through its PPM plugin
        return "PNG" if self is ImageFormat.PNG else "PPM"


# Pillow mode -> (channels, full-scale value)
_MODES = {
    "1": (1, 1.0),
    "L": (1, 255.0),
    "RGB": (3, 255.0),
    "I": (1, 65535.0),
    "I;16": (1, 65535.0),
    "I;16B": (1, 65535.0),
}


@dataclass(frozen=True)
class SourceImage:
    """A decoded image with values in [0, 1], stored as (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3) or 0 in pixels.shape:
            raise ImageFormatError(f"image array must be (H, W, 1|3), got {pixels.shape}")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def channels(self):
        return self.pixels.shape[2]

    def to_rgb(self):
        """(H, W, 3) array; grayscale is replicated."""
        if self.channels == 1:
            return np.repeat(self.pixels, 3, axis=2)
        return self.pixels


def _netpbm_header(data):
    """Parse a binary Netpbm header.

    Returns:
        (magic, width, height, maxval, offset of the first raster byte)
    """
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated Netpbm header")
        tokens.append(data[start:pos])
    magic = tokens[0].decode("ascii", errors="replace")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"malformed Netpbm header {tokens!r}")
    # Exactly one whitespace byte separates the header from the raster
    return magic, width, height, maxval, pos + 1


def _load_deep_netpbm(data, path):
    """Decode a 16-bit P5/P6 raster, or return None for 8-bit files."""
    if data[:2] not in (b"P5", b"P6"):
        return None
    magic, width, height, maxval, offset = _netpbm_header(data)
    if maxval <= 255:
        return None
    if maxval > 65535 or width < 1 or height < 1:
        raise ImageFormatError(f"Unsupported Netpbm dimensions or maxval in {path}")
    channels = 3 if magic == "P6" else 1
    count = width * height * channels
    if len(data) < offset + 2 * count:
        raise ImageFormatError(f"Truncated raster in {path}")
    raster = np.frombuffer(data, dtype=">u2", count=count, offset=offset)
    if raster.max(initial=0) > maxval:
        raise ImageFormatError(f"Sample above maxval {maxval} in {path}")
    return raster.reshape(height, width, channels).astype(np.float64) / maxval


def load_image(path, image_format=None):
    """Load a PNG, PPM or PGM file.

    Args:
        path: Image file
        image_format: ImageFormat or name; inferred from the suffix if None

    Returns:
        SourceImage with 8-bit values divided by 255; 16-bit PPM/PGM samples are
        divided by the file's maxval, PNG by 65535

    Raises:
        OSError: if the file cannot be read
        ImageFormatError: on malformed headers or unsupported bit depths
    """
    path = Path(path)
    if image_format is None:
        image_format = ImageFormat.from_path(path)
    elif not isinstance(image_format, ImageFormat):
        try:
            image_format = ImageFormat(str(image_format).upper())
        except ValueError:
            raise ImageFormatError(f"Unsupported image format '{image_format}'")

    if image_format in (ImageFormat.PPM, ImageFormat.PGM):
        deep = _load_deep_netpbm(path.read_bytes(), path)
        if deep is not None:
            logger.debug(f"Loaded 16-bit {path}: {deep.shape[1]}x{deep.shape[0]}x{deep.shape[2]}")
            return SourceImage(deep)

    try:
        with Image.open(path, formats=[image_format.pillow_format]) as img:
            img.load()
            mode = img.mode
            if mode in ("RGBA", "P", "PA", "CMYK", "YCbCr"):
                img = img.convert("RGB")
                mode = "RGB"
            elif mode == "LA":
                img = img.convert("L")
                mode = "L"
            if mode not in _MODES:
                raise ImageFormatError(f"Unsupported image mode '{mode}' in {path}")
            channels, scale = _MODES[mode]
            array = np.asarray(img, dtype=np.float64)
    except (UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise ImageFormatError(f"Cannot decode {path}: {e}")

    array = array.reshape(array.shape[0], array.shape[1], channels) / scale
    if array.min() < 0.0 or array.max() > 1.0:
        raise ImageFormatError(f"Unsupported bit depth in {path}")

    image = SourceImage(array)
    logger.debug(f"Loaded {path}: {image.width}x{image.height}x{image.channels}")
    return image


def to_uint8(values):
    return np.round(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_ppm(path, rgb):
    """Write an (H, W, 3) array in [0, 1] as a binary 8-bit PPM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ImageFormatError(f"PPM output needs an (H, W, 3) array, got {rgb.shape}")
    Image.fromarray(to_uint8(rgb)).save(path, format="PPM")
    return path


def save_pgm(path, gray):
    """Write an (H, W) array in [0, 1] as a binary 8-bit PGM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    gray = np.asarray(gray)
    if gray.ndim == 3 and gray.shape[2] == 1:
        gray = gray[:, :, 0]
    if gray.ndim != 2:
        raise ImageFormatError(f"PGM output needs an (H, W) array, got {gray.shape}")
    Image.fromarray(to_uint8(gray)).save(path, format="PPM")
    return path


def save_label_pgm(path, labels):
    """Write integer class labels (0..255) as a PGM label map."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ImageFormatError("label maps must hold values in 0..255")
    Image.fromarray(labels.astype(np.uint8)).save(path, format="PPM")
    return path


def load_label_pgm(path):
    """Read a PGM label map as an (H, W) integer array."""
    try:
        with Image.open(path, formats=["PPM"]) as img:
            if img.mode != "L":
                raise ImageFormatError(f"label map {path} must be 8-bit grayscale, got {img.mode}")
            return np.asarray(img, dtype=np.int64)
    except (UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise ImageFormatError(f"Cannot decode {path}: {e}")
