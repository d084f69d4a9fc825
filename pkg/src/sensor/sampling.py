"""
Sample generation for the sensor simulation.

Two families of rules are provided. With jitter on, every pixel and every
pixel edge draws a stratified pattern from its own random stream, derived
from the master seed and the pixel/edge identity, so sample positions never
depend on evaluation order or thread count.

With jitter off the samples form a deterministic quadrature:

    gauss     composite Gauss-Legendre, split on the coordinate axes; for
              curvilinear layouts also on the unit circle, where the
              Jacobian jumps, with grading towards the origin
    midpoint  the stratum midpoints of the jittered pattern

Every rule returns normalised weights, so a pixel estimate is always
sum(weights * values).
"""

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from ..layout.deformation import LayoutKind
from ..utils.errors import DomainError

logger = logging.getLogger(__name__)

_INTERIOR_STREAM = 0
_EDGE_STREAM = 1
_EDGE_AXES = {"v": 0, "h": 1}

QUADRATURE_RULES = ("gauss", "midpoint")
# Longest Gauss-Legendre piece, in sensor units
MAX_PIECE = 0.5
# Geometric refinement towards the curvilinear origin, as fractions of the pixel side
ORIGIN_GRADING = (0.25, 0.0625, 0.015625)
CUT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SamplingConfig:
    """Sampling settings shared by the forward and backward passes.

    interior_strata: n, giving an n x n pattern per pixel (per piece for gauss)
    boundary_samples: samples per pixel edge (per piece for gauss)
    rng_seed: master seed
    jitter: True for jittered strata, False for a deterministic quadrature
    rule: quadrature used when jitter is off, 'gauss' or 'midpoint'
    """

    interior_strata: int = 8
    boundary_samples: int = 32
    rng_seed: int = 0
    jitter: bool = True
    rule: str = "gauss"

    def __post_init__(self):
        if int(self.interior_strata) != self.interior_strata or self.interior_strata < 1:
            raise DomainError(f"interior_strata must be >= 1, got {self.interior_strata}")
        if int(self.boundary_samples) != self.boundary_samples or self.boundary_samples < 2:
            raise DomainError(f"boundary_samples must be >= 2, got {self.boundary_samples}")
        if int(self.rng_seed) != self.rng_seed or not 0 <= self.rng_seed < 2 ** 64:
            raise DomainError(f"rng_seed must be an unsigned 64-bit integer, got {self.rng_seed}")
        rule = str(self.rule).strip().lower()
        if rule not in QUADRATURE_RULES:
            raise DomainError(f"rule must be one of {', '.join(QUADRATURE_RULES)}, got '{self.rule}'")
        object.__setattr__(self, "interior_strata", int(self.interior_strata))
        object.__setattr__(self, "boundary_samples", int(self.boundary_samples))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))
        object.__setattr__(self, "jitter", bool(self.jitter))
        object.__setattr__(self, "rule", rule)

    @classmethod
    def from_dict(cls, values, **overrides):
        """Build from a config section, letting non-None overrides win."""
        merged = {key: values[key] for key in cls.__dataclass_fields__ if key in values}
        merged.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**merged)

    def to_dict(self):
        """Plain dict of the settings, as stored in manifests and checkpoints."""
        return asdict(self)

    def with_seed(self, seed):
        return replace(self, rng_seed=int(seed))

    def refined(self, factor):
        """Same settings with `factor` times more strata per axis and per edge."""
        return replace(self, interior_strata=self.interior_strata * factor,
                       boundary_samples=self.boundary_samples * factor)

    @property
    def is_gauss(self):
        return not self.jitter and self.rule == "gauss"

    @property
    def samples_per_pixel(self):
        """Samples per pixel for the stratified rules; gauss uses at least this many."""
        return self.interior_strata ** 2


@dataclass(frozen=True)
class PixelQuadrature:
    """Sample positions in one uniform pixel and their weights (summing to 1)."""

    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.weights.shape[0]


def pixel_rng(seed, k):
    """Random stream for the interior samples of pixel k."""
    return np.random.default_rng(np.random.SeedSequence([seed, _INTERIOR_STREAM, int(k[0]), int(k[1])]))


def edge_rng(seed, edge_key):
    """Random stream for one unique pixel edge, keyed ('v'|'h', i, j)."""
    axis, i, j = edge_key
    return np.random.default_rng(np.random.SeedSequence([seed, _EDGE_STREAM, _EDGE_AXES[axis], int(i), int(j)]))


def stratum_offsets(n, rng=None):
    """Positions in [0, 1)^2 of an n x n stratified pattern, shape (n * n, 2).

    With rng=None the stratum midpoints are returned.
    """
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    base = np.stack([i.ravel(), j.ravel()], axis=-1).astype(np.float64)
    jitter = 0.5 if rng is None else rng.random(base.shape)
    return (base + jitter) / n


def boundary_offsets(m, rng=None):
    """Stratified parameters t in [0, 1) along an edge, shape (m,)."""
    jitter = 0.5 if rng is None else rng.random(m)
    return (np.arange(m) + jitter) / m


def stratified_samples(bounds, cfg, k):
    """Stratified interior positions for one uniform pixel, shape (n * n, 2)."""
    rng = pixel_rng(cfg.rng_seed, k) if cfg.jitter else None
    offsets = stratum_offsets(cfg.interior_strata, rng)
    width, height = bounds.size
    return np.stack([bounds.x0 + offsets[:, 0] * width, bounds.y0 + offsets[:, 1] * height], axis=-1)


def edge_parameters(edge_key, cfg):
    """Stratified curve parameters for one unique edge, shape (boundary_samples,)."""
    rng = edge_rng(cfg.rng_seed, edge_key) if cfg.jitter else None
    return boundary_offsets(cfg.boundary_samples, rng)


def gauss_nodes(lo, hi, n):
    """Gauss-Legendre nodes and weights on [lo, hi]."""
    x, w = leggauss(n)
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * x, half * w


def split_interval(lo, hi, cuts, max_length=None):
    """Pieces of [lo, hi] between the cuts strictly inside it.

    Pieces longer than max_length are split evenly.
    """
    inner = sorted({float(c) for c in cuts if lo + CUT_TOLERANCE < c < hi - CUT_TOLERANCE})
    ends = [lo] + inner + [hi]
    pieces = []
    for a, b in zip(ends[:-1], ends[1:]):
        parts = 1 if max_length is None else max(1, int(np.ceil((b - a) / max_length - CUT_TOLERANCE)))
        grid = np.linspace(a, b, parts + 1)
        pieces.extend(zip(grid[:-1], grid[1:]))
    return pieces


def circle_cuts(c):
    """Coordinates where the line at c crosses the unit circle."""
    if abs(c) >= 1.0:
        return []
    s = float(np.sqrt(1.0 - c * c))
    return [-s, s]


def _origin_cuts(lo, hi):
    side = hi - lo
    return [sign * side * f for f in ORIGIN_GRADING for sign in (-1.0, 1.0)]


def _touches_origin(lo, hi):
    return lo <= 0.0 <= hi


def gauss_pixel_quadrature(bounds, n, params):
    """Composite Gauss-Legendre rule over one uniform pixel.

    The x pieces are split so that the unit circle enters and leaves the
    pixel only at piece ends; for every x node the y pieces are split where
    the circle and the axis cross that vertical line.
    """
    kinked = not params.is_identity
    curved = kinked and params.kind is LayoutKind.CURVILINEAR
    graded = curved and _touches_origin(bounds.x0, bounds.x1) and _touches_origin(bounds.y0, bounds.y1)

    x_cuts = [0.0] if kinked else []
    y_base = [0.0] if kinked else []
    if curved:
        for y in (bounds.y0, bounds.y1):
            x_cuts += circle_cuts(y)
    if graded:
        x_cuts += _origin_cuts(bounds.x0, bounds.x1)
        y_base += _origin_cuts(bounds.y0, bounds.y1)

    points, weights = [], []
    for a, b in split_interval(bounds.x0, bounds.x1, x_cuts, MAX_PIECE):
        xs, wx = gauss_nodes(a, b, n)
        for x, w in zip(xs, wx):
            y_cuts = y_base + circle_cuts(x) if curved else y_base
            for c, d in split_interval(bounds.y0, bounds.y1, y_cuts, MAX_PIECE):
                ys, wy = gauss_nodes(c, d, n)
                points.append(np.stack([np.full(n, x), ys], axis=-1))
                weights.append(w * wy)
    weights = np.concatenate(weights)
    return PixelQuadrature(points=np.concatenate(points), weights=weights / weights.sum())


def pixel_quadrature(bounds, cfg, k, params):
    """Interior samples and weights for one uniform pixel under a layout."""
    if cfg.is_gauss:
        return gauss_pixel_quadrature(bounds, cfg.interior_strata, params)
    points = stratified_samples(bounds, cfg, k)
    return PixelQuadrature(points=points, weights=np.full(points.shape[0], 1.0 / points.shape[0]))


def segment_cuts(start, delta, params):
    """Parameters u in (0, 1) where start + u * delta crosses a kink line."""
    if params.is_identity:
        return []
    start = np.asarray(start, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    cuts = [-start[j] / delta[j] for j in range(2) if delta[j] != 0.0]
    if params.kind is LayoutKind.CURVILINEAR:
        a = float(delta @ delta)
        b = 2.0 * float(start @ delta)
        c = float(start @ start) - 1.0
        disc = b * b - 4.0 * a * c
        if disc > 0.0:
            root = np.sqrt(disc)
            cuts += [(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)]
    return cuts


def edge_quadrature(edge_key, start, delta, cfg, params):
    """Curve parameters and weights (summing to 1) for one unique edge.

    start and delta describe the canonical traversal of the edge.
    """
    if cfg.is_gauss:
        length = float(np.hypot(*delta))
        pieces = split_interval(0.0, 1.0, segment_cuts(start, delta, params), MAX_PIECE / length)
        nodes = [gauss_nodes(a, b, cfg.boundary_samples) for a, b in pieces]
        return np.concatenate([u for u, _ in nodes]), np.concatenate([w for _, w in nodes])
    u = edge_parameters(edge_key, cfg)
    return u, np.full(u.shape[0], 1.0 / u.shape[0])
