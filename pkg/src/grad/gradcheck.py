"""
Finite-difference verification of the layout gradient.

The analytic gradient of the scalar <upstream, I(theta)> is compared with
central differences of the forward simulation. Differences are taken in the
unconstrained theta_raw coordinates used by the optimizer, where any step
keeps theta inside (-1, 1).
"""

import logging

import numpy as np

from .backward import backward
from ..layout.deformation import LayoutParams
from ..sensor.simulation import simulate
from ..utils.errors import ToleranceError

logger = logging.getLogger(__name__)

# Components below this magnitude are compared absolutely
RELATIVE_ERROR_FLOOR = 1e-10
# Gradient norms below this are compared absolutely; a 2x2 sensor has exact gradient 0
GRADIENT_FLOOR = 1e-3


def finite_difference_gradient(fn, x, step=1e-4):
    """Central-difference gradient of a scalar function.

    Args:
        fn: Callable taking a 1-D array and returning a float
        x: Point to differentiate at
        step: Step size h

    Returns:
        Array of (fn(x + h e_i) - fn(x - h e_i)) / 2h
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return grad


def relative_error(a, b, floor=RELATIVE_ERROR_FLOOR):
    """Componentwise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def norm_relative_error(a, b, floor=GRADIENT_FLOOR):
    """||a - b|| / max(||a||, ||b||, floor) over whole arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


class NoGradientField:
    """Wraps a radiance field and refuses every derivative request.

    Point sampling is forwarded unchanged, so a backward pass that only uses
    field values runs normally.
    """

    _FORBIDDEN = ("grad", "deriv", "jacobian", "hessian")

    def __init__(self, field):
        self._field = field
        self.requested = []

    @property
    def batch_shape(self):
        return self._field.batch_shape

    def sample(self, points):
        return self._field.sample(points)

    def gradient(self, points):
        raise AssertionError("the sensor gradient must not differentiate the radiance field")

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        if any(word in name.lower() for word in self._FORBIDDEN):
            self.requested.append(name)
            raise AssertionError(f"derivative attribute '{name}' requested from the radiance field")
        return getattr(self._field, name)


def random_upstream(shape, seed):
    """Deterministic upstream gradient with entries in [-1, 1]."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=shape)


def gradcheck(field, grid, params, cfg, upstream=None, upstream_seed=0, fd_step=1e-4,
              tolerance=1e-2, threads=1, raise_on_failure=False):
    """Compare the analytic layout gradient against finite differences.

    Args:
        field: RadianceField
        grid: SensorGrid
        params: LayoutParams at which to check
        cfg: SamplingConfig; the same samples are reused for every evaluation
        upstream: dLoss/dI; random with upstream_seed if None
        upstream_seed: Seed for the random upstream
        fd_step: Central-difference step in theta_raw
        tolerance: Largest accepted norm-relative error (see GRADIENT_FLOOR)
        threads: Worker threads
        raise_on_failure: Raise ToleranceError instead of returning a failed report

    Returns:
        Report dict with analytic, finite_difference and relative_error per
        theta component (theta_raw coordinates), plus the theta-space gradient

    Raises:
        ToleranceError: if raise_on_failure and the tolerance is exceeded
    """
    image, cache = simulate(field, grid, params, cfg, threads=threads, return_cache=True)
    if upstream is None:
        upstream = random_upstream(image.pixels.shape, upstream_seed)
    record = backward(image, upstream, NoGradientField(field), params, cfg, cache, threads=threads)

    def objective(theta_raw):
        perturbed = LayoutParams.from_raw(params.kind, theta_raw)
        return float(np.sum(upstream * simulate(field, grid, perturbed, cfg, threads=threads).pixels))

    analytic = record.dloss_dtheta_raw
    numeric = finite_difference_gradient(objective, np.array(params.theta_raw), fd_step)
    errors = relative_error(analytic, numeric)
    error = norm_relative_error(analytic, numeric)
    passed = error <= tolerance

    report = {
        "kind": params.kind.value,
        "grid": str(grid),
        "theta": list(params.theta),
        "theta_raw": list(params.theta_raw),
        "fd_step": fd_step,
        "tolerance": tolerance,
        "analytic": analytic.tolist(),
        "finite_difference": numeric.tolist(),
        "relative_error": errors.tolist(),
        "error": error,
        "dloss_dtheta": record.dloss_dtheta.tolist(),
        "volume_rate_sum": record.dvolume_dtheta.sum(axis=(0, 1)).tolist(),
        "passed": passed,
    }
    logger.info(f"gradcheck {grid} {params.kind.value}: analytic={analytic.tolist()}, "
                f"fd={numeric.tolist()}, error={error:.3e}")

    if not passed:
        logger.warning(f"Gradient check failed: relative error {error:.3e} > {tolerance}")
        if raise_on_failure:
            raise ToleranceError(f"relative error {error:.3e} exceeds tolerance {tolerance}",
                                 report=report)
    return report
