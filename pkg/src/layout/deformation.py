"""
Pixel layout deformations for the sensor layout simulator.
Implements the curvilinear and rectangular families, their spatial Jacobians,
parameter derivatives and inverses on the sensor domain S = [-1, 1]^2.

All functions are vectorised: points have shape (..., 2), matrices (..., 2, 2).
Inside the deformation region each coordinate follows

    phi_j(p) = p_j * (theta_j - 1) / (2 * theta_j * rho_j - theta_j - 1)

with rho_j = ||p||_2 for the curvilinear family and rho_j = |p_j| for the
rectangular one. Outside (rho_j >= 1) the map is the identity.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..utils.errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

# Points this far outside S are clamped back in; anything further is an error
DOMAIN_EPS = 1e-9

# tanh saturates to exactly 1.0 in double precision for |x| > ~19
THETA_LIMIT = 1.0 - 1e-9

BISECTION_ITERATIONS = 80
INVERSE_TOLERANCE = 1e-9


class LayoutKind(Enum):
    """Deformation family of a pixel layout."""

    CURVILINEAR = "curvilinear"
    RECTANGULAR = "rectangular"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, text):
        """Parse a kind name or one of its short aliases."""
        if isinstance(text, cls):
            return text
        aliases = {
            "curv": cls.CURVILINEAR,
            "curvilinear": cls.CURVILINEAR,
            "rect": cls.RECTANGULAR,
            "rectangular": cls.RECTANGULAR,
            "identity": cls.IDENTITY,
            "uniform": cls.IDENTITY,
        }
        try:
            return aliases[str(text).strip().lower()]
        except KeyError:
            raise DomainError(f"Unknown layout kind '{text}' (expected curv, rect or identity)")


def _as_pair(values, name):
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape != (2,):
        raise DomainError(f"{name} must have exactly two components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {arr.tolist()}")
    return arr


@dataclass(frozen=True)
class LayoutParams:
    """Deformation parameters theta in (-1, 1)^2 and their unconstrained preimage.

    theta is the cached tanh(theta_raw); build instances with from_theta or
    from_raw rather than the constructor.
    """

    kind: LayoutKind
    theta_raw: tuple
    theta: tuple = field(default=None)

    def __post_init__(self):
        kind = LayoutKind.parse(self.kind)
        raw = _as_pair(self.theta_raw, "theta_raw")
        if self.theta is None:
            theta = np.clip(np.tanh(raw), -THETA_LIMIT, THETA_LIMIT)
        else:
            theta = _as_pair(self.theta, "theta")
        if np.any(np.abs(theta) >= 1.0):
            raise DomainError(f"theta must lie in (-1, 1)^2, got {theta.tolist()}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "theta_raw", tuple(float(v) for v in raw))
        object.__setattr__(self, "theta", tuple(float(v) for v in theta))

    @classmethod
    def from_raw(cls, kind, theta_raw):
        """Build parameters from the unconstrained vector."""
        return cls(kind=kind, theta_raw=theta_raw)

    @classmethod
    def from_theta(cls, kind, theta):
        """Build parameters from theta, which must lie in (-1, 1)^2."""
        theta = _as_pair(theta, "theta")
        if np.any(np.abs(theta) >= 1.0):
            raise DomainError(
                f"theta must lie in the open interval (-1, 1), got {theta.tolist()}; "
                "pass the unconstrained theta_raw instead"
            )
        return cls(kind=kind, theta_raw=np.arctanh(theta), theta=theta)

    @classmethod
    def identity(cls):
        """Uniform layout used for baselines."""
        return cls(kind=LayoutKind.IDENTITY, theta_raw=(0.0, 0.0))

    def with_raw(self, theta_raw):
        """Return a copy with a new unconstrained vector (theta recomputed)."""
        return LayoutParams(kind=self.kind, theta_raw=theta_raw)

    @property
    def effective_theta(self):
        """theta as consumed by the geometry; always zero for the identity kind."""
        if self.kind is LayoutKind.IDENTITY:
            return np.zeros(2)
        return np.array(self.theta, dtype=np.float64)

    @property
    def is_identity(self):
        """True when the map is exactly the identity."""
        return self.kind is LayoutKind.IDENTITY or not np.any(self.effective_theta)

    def dtheta_draw(self):
        """Derivative of theta with respect to theta_raw (1 - tanh^2)."""
        theta = np.array(self.theta, dtype=np.float64)
        return 1.0 - theta ** 2

    def to_dict(self):
        """JSON-ready kind, theta and theta_raw."""
        return {
            "kind": self.kind.value,
            "theta": list(self.theta),
            "theta_raw": list(self.theta_raw),
        }


def check_points(p):
    """Validate points against S, clamping those within DOMAIN_EPS outside it."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1:] != (2,):
        raise DomainError(f"points must have a trailing dimension of 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError("points must be finite")
    excess = np.abs(p).max(initial=0.0) - 1.0
    if excess > DOMAIN_EPS:
        raise DomainError(f"point outside the sensor domain [-1, 1]^2 by {excess:.3e}")
    if excess > 0.0:
        p = np.clip(p, -1.0, 1.0)
    return p


def _rho(p, kind):
    """Per-component radius controlling the deformation, shape (..., 2)."""
    if kind is LayoutKind.CURVILINEAR:
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        return np.broadcast_to(r, p.shape)
    return np.abs(p)


def _denominator(theta, rho):
    return 2.0 * theta * rho - theta - 1.0


def deform(p, params):
    """Map points of S through phi(., theta).

    Args:
        p: Points, shape (2,) or (..., 2)
        params: LayoutParams

    Returns:
        Deformed points with the same shape
    """
    p = check_points(p)
    if params.is_identity:
        return p.copy()

    theta = params.effective_theta
    rho = _rho(p, params.kind)
    inside = rho < 1.0
    # The identity branch keeps the denominator away from any pole
    rho_safe = np.where(inside, rho, 0.0)
    mapped = p * (theta - 1.0) / _denominator(theta, rho_safe)
    return np.where(inside, mapped, p)


def jacobian(p, params):
    """Spatial Jacobian J_phi(p, theta), shape (..., 2, 2).

    On the kink sets the interior formula is used strictly inside the
    deformation region and the identity elsewhere.
    """
    p = check_points(p)
    shape = p.shape[:-1] + (2, 2)
    eye = np.broadcast_to(np.eye(2), shape).copy()
    if params.is_identity:
        return eye

    theta = params.effective_theta
    rho = _rho(p, params.kind)
    inside = rho < 1.0
    rho_safe = np.where(inside, rho, 0.0)
    denom = _denominator(theta, rho_safe)

    if params.kind is LayoutKind.RECTANGULAR:
        diag = np.where(inside, (1.0 - theta ** 2) / denom ** 2, 1.0)
        jac = np.zeros(shape)
        jac[..., 0, 0] = diag[..., 0]
        jac[..., 1, 1] = diag[..., 1]
        return jac

    # Curvilinear: d phi_j / d p_i = delta_ji N_j / D_j - 2 theta_j N_j p_j (p_i / r) / D_j^2
    n = theta - 1.0
    r = rho[..., 0]
    r_safe = np.where(r > 0.0, r, 1.0)
    unit = np.where((r > 0.0)[..., None], p / r_safe[..., None], 0.0)
    radial = (2.0 * theta * n * p / denom ** 2)[..., :, None] * unit[..., None, :]
    jac = eye * (n / denom)[..., :, None] - radial
    return np.where(inside[..., 0][..., None, None], jac, eye)


def jacobian_det(p, params):
    """|det J_phi(p, theta)|, shape (...)."""
    return np.abs(np.linalg.det(jacobian(p, params)))


def deform_dtheta(p, params):
    """Derivative of phi with respect to theta at fixed p.

    Returns:
        Matrix of shape (..., 2, 2) whose column j is d phi / d theta_j.
        Both families are component-separable in theta, so it is diagonal.
    """
    p = check_points(p)
    shape = p.shape[:-1] + (2, 2)
    out = np.zeros(shape)
    if params.kind is LayoutKind.IDENTITY:
        return out

    theta = params.effective_theta
    rho = _rho(p, params.kind)
    inside = rho < 1.0
    rho_safe = np.where(inside, rho, 0.0)
    denom = _denominator(theta, rho_safe)
    diag = np.where(inside, 2.0 * p * (rho_safe - 1.0) / denom ** 2, 0.0)
    out[..., 0, 0] = diag[..., 0]
    out[..., 1, 1] = diag[..., 1]
    return out


def deform_inverse(q, params):
    """Map points back through phi^{-1}(., theta).

    The rectangular family has a closed-form inverse per component. The
    curvilinear family is inverted by bisection on the pre-image radius,
    after which the components are rescaled.

    Raises:
        ConvergenceError: if the recovered point does not reproduce q
    """
    q = check_points(q)
    if params.is_identity:
        return q.copy()

    theta = params.effective_theta
    if params.kind is LayoutKind.RECTANGULAR:
        a = np.abs(q)
        inside = a < 1.0
        a_safe = np.where(inside, a, 0.0)
        p = np.sign(q) * a_safe * (1.0 + theta) / (1.0 - theta + 2.0 * theta * a_safe)
        return np.where(inside, p, q)

    norm_q = np.linalg.norm(q, axis=-1)
    inside = norm_q < 1.0

    def scale(r):
        # p_j = q_j * (1 + theta_j - 2 theta_j r) / (1 - theta_j)
        return (1.0 + theta - 2.0 * theta * r[..., None]) / (1.0 - theta)

    def residual(r):
        return np.linalg.norm(q * scale(r), axis=-1) - r

    lo = np.zeros(norm_q.shape)
    hi = np.ones(norm_q.shape)
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        positive = residual(mid) > 0.0
        lo = np.where(positive, mid, lo)
        hi = np.where(positive, hi, mid)
    r = 0.5 * (lo + hi)
    p = np.where(inside[..., None], q * scale(r), q)

    if np.any(inside):
        err = np.abs(residual(r))[inside].max()
        if err > INVERSE_TOLERANCE:
            raise ConvergenceError(f"curvilinear inverse did not converge (residual {err:.3e})")
    return p
