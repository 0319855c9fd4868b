r"""
Radial Stretches
================

The building blocks of every construction in ``wqr``. Given a ball ``B(y, r)``, a target point ``z`` and a
scale ``t > 0`` the radial stretch is

.. math::

    f(x) = z + t (x - y) \left(\frac{r}{|x - y|}\right)^{\alpha}

It agrees with the affine map ``z + t (x - y)`` on the sphere ``|x - y| = r`` and blows the inner part of the
ball outwards, which reverses orientation. Two exponents are used:

* ``PHI``: ``alpha = 1 + 1/K``, tangential stretching dominates
* ``PSI``: ``alpha = 1 + K``, radial stretching dominates

In both cases the Jacobian is ``t (r / rho)^alpha [Id - alpha u u^T]`` with ``rho = |x - y|`` and
``u = (x - y) / rho``: a multiple of the identity perturbed in the radial direction. Its singular values
are the tangential ``t (r / rho)^alpha`` (``n - 1`` times) and ``|1 - alpha|`` times that, so the ratio of
the largest to the smallest is exactly ``K`` and the determinant is negative.

``|Df|`` is the spectral norm throughout. The scale ``t`` is stored as ``log_scale`` because the scales
accumulated in deep constructions grow geometrically.

This module also has the oracles used to cross check the closed forms: a torch implementation of the same
formula differentiated by autograd, central finite differences and ``scipy`` quadrature of the annulus
energy.

Documentation
-------------
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
import torch
from scipy.integrate import quad

from .geometry import Ball, as_points, sphere_measure
from .utils import WQRError

VALID_VARIANTS = ["PHI", "PSI"]
# below this many radii from the center the stretch is undefined
SINGULAR_TOL = 1e-300
# |beta| below this uses the logarithmic energy branch
LOG_BRANCH_TOL = 1e-12


class SingularPoint(WQRError):
    exit_code = 1


@dataclass(frozen=True)
class StretchVariant:
    tag: str
    K: float

    def __post_init__(self):
        object.__setattr__(self, "tag", str(self.tag).upper())
        object.__setattr__(self, "K", float(self.K))
        if self.tag not in VALID_VARIANTS:
            raise ValueError(f"variant should be one of {VALID_VARIANTS} got: {self.tag}")
        if not self.K >= 1:
            raise ValueError(f"K must be >= 1, got: {self.K}")

    @classmethod
    def phi(cls, K):
        return cls("PHI", K)

    @classmethod
    def psi(cls, K):
        return cls("PSI", K)

    @property
    def alpha(self):
        return 1 + 1 / self.K if self.tag == "PHI" else 1 + self.K

    @property
    def norm_factor(self):
        """operator norm coefficient over ``t`` on the outer sphere: 1 for PHI, K for PSI"""
        return max(1.0, self.alpha - 1)

    def critical_p(self, n):
        # n K / (K + 1) for PHI, n / (K + 1) for PSI
        return n / self.alpha

    def dimension_target(self, n):
        return n / (self.K + 1) if self.tag == "PHI" else n * self.K / (self.K + 1)

    def to_dict(self):
        return {"tag": self.tag, "K": self.K}


class SingularStructure(NamedTuple):
    tangential: np.ndarray
    radial_signed: np.ndarray
    det: np.ndarray
    operator_norm: np.ndarray
    distortion: np.ndarray


@dataclass(frozen=True)
class AffineMap:
    """``x -> matrix @ x + offset``; the inner branch of the constructions and the test fixtures for degree
    and pairing checks"""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", np.broadcast_to(np.asarray(self.offset, dtype=float), (m.shape[0],)).copy())

    @classmethod
    def scaling(cls, center, image, scale):
        """``x -> image + scale (x - center)``"""
        center = np.asarray(center, dtype=float)
        m = scale * np.eye(len(center))
        return cls(m, np.asarray(image, dtype=float) - m @ center)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def det(self):
        return float(np.linalg.det(self.matrix))

    def __call__(self, x):
        x = as_points(x, self.n)
        return x @ self.matrix.T + self.offset

    def gradient(self, x):
        x = as_points(x, self.n)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()


@dataclass(frozen=True)
class RadialStretch:
    ball: Ball
    target: Tuple[float, ...]
    log_scale: float
    variant: StretchVariant

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(float(c) for c in np.ravel(self.target)))
        object.__setattr__(self, "log_scale", float(self.log_scale))
        if len(self.target) != self.ball.n:
            raise ValueError(f"target has dimension {len(self.target)}, ball has {self.ball.n}")

    @property
    def n(self):
        return self.ball.n

    @property
    def t(self):
        return math.exp(self.log_scale)

    @property
    def alpha(self):
        return self.variant.alpha

    @property
    def z(self):
        return np.array(self.target)

    def _polar(self, x):
        x = as_points(x, self.n)
        d = x - self.ball.y
        rho = np.linalg.norm(d, axis=-1)
        if np.any(rho < SINGULAR_TOL * self.ball.radius):
            raise SingularPoint(f"stretch evaluated at its center {self.ball.center}", center=list(self.ball.center))
        return d, rho

    def _tangential(self, rho):
        r = self.ball.radius
        # exactly t on the outer sphere
        return self.t * np.where(rho == r, 1.0, (r / np.where(rho == r, r, rho)) ** self.alpha)

    def __call__(self, x):
        d, rho = self._polar(x)
        return self.z + self._tangential(rho)[..., None] * d

    eval = __call__

    def jacobian(self, x):
        d, rho = self._polar(x)
        u = d / rho[..., None]
        lam = self._tangential(rho)
        eye = np.eye(self.n)
        return lam[..., None, None] * (eye - self.alpha * u[..., :, None] * u[..., None, :])

    gradient = jacobian

    def adjugate(self, x):
        # lam^(n-1) [(1 - alpha) Id + alpha u u^T]
        d, rho = self._polar(x)
        u = d / rho[..., None]
        lam = self._tangential(rho)
        eye = np.eye(self.n)
        return (lam ** (self.n - 1))[..., None, None] * ((1 - self.alpha) * eye + self.alpha * u[..., :, None] * u[..., None, :])

    def singular_structure(self, x) -> SingularStructure:
        _, rho = self._polar(x)
        tangential = self._tangential(rho)
        radial = tangential * (1 - self.alpha)
        det = tangential ** (self.n - 1) * radial
        big = np.maximum(tangential, np.abs(radial))
        small = np.minimum(tangential, np.abs(radial))
        return SingularStructure(tangential, radial, det, big, big / small)

    def log_annulus_energy(self, p, a):
        r"""log of ``int_{B \ aB} |Df|^p``. With ``beta = n - p alpha`` and ``c = t * norm_factor`` the
        integral is ``omega c^p r^n (1 - a^beta) / beta``, and ``omega c^p r^n ln(1/a)`` when ``beta = 0``."""
        if p < 1:
            raise ValueError(f"p must be >= 1, got: {p}")
        if not 0 < a < 1:
            raise ValueError(f"a must be in (0, 1), got: {a}")
        n = self.n
        beta = n - p * self.alpha
        if abs(beta) < LOG_BRANCH_TOL:
            shape = -math.log(a)
        else:
            shape = -math.expm1(beta * math.log(a)) / beta
        log_c = self.log_scale + math.log(self.variant.norm_factor)
        return math.log(sphere_measure(n)) + p * log_c + n * math.log(self.ball.radius) + math.log(shape)

    def annulus_energy(self, p, a):
        return math.exp(self.log_annulus_energy(p, a))

    def affine_extension(self):
        """the affine map this stretch agrees with on the outer sphere"""
        return AffineMap.scaling(self.ball.y, self.z, self.t)

    def to_dict(self):
        return {"ball": self.ball.to_dict(), "target": list(self.target), "log_scale": self.log_scale, "variant": self.variant.to_dict()}


# ============= generic matrix helpers =============== #


def adjugate(m):
    """adjugate of a (batch of) square matrices through cofactors, valid for singular matrices too"""
    m = np.asarray(m, dtype=float)
    n = m.shape[-1]
    if n == 1:
        return np.ones_like(m)
    cof = np.empty_like(m)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(m, i, axis=-2), j, axis=-1)
            cof[..., i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return np.swapaxes(cof, -1, -2)


def singular_values(m):
    return np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)


def finite_difference_jacobian(fn, x, h):
    """central differences; ``fn`` maps ``(m, n)`` points to ``(m, n)`` images, ``h`` a scalar or one step per point"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    h = np.broadcast_to(np.asarray(h, dtype=float), (m,))[:, None]
    J = np.empty((m, n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        J[:, :, j] = (fn(x + h * e) - fn(x - h * e)) / (2 * h)
    return J


# ============= oracles =============== #


def torch_stretch(x, center, target, t, r, alpha):
    d = x - center
    rho = torch.linalg.norm(d, dim=-1, keepdim=True)
    return target + t * d * (r / rho) ** alpha


def autograd_jacobian(stretch: RadialStretch, x):
    """Jacobian of the stretch differentiated by torch autograd, independent of the closed form"""
    x = torch.as_tensor(np.atleast_2d(as_points(x, stretch.n)), dtype=torch.float64)
    y = torch.as_tensor(stretch.ball.y, dtype=torch.float64)
    z = torch.as_tensor(stretch.z, dtype=torch.float64)

    def fn(p):
        return torch_stretch(p, y, z, stretch.t, stretch.ball.radius, stretch.alpha).sum(0)

    J = torch.autograd.functional.jacobian(fn, x)  # (n, m, n)
    return J.permute(1, 0, 2).numpy()


def annulus_energy_quadrature(stretch: RadialStretch, p, a):
    """adaptive 1-D quadrature of the radial integrand ``omega rho^(n-1) |Df|^p`` over ``[a r, r]``"""
    n, r, alpha = stretch.n, stretch.ball.radius, stretch.alpha
    c = stretch.t * stretch.variant.norm_factor
    omega = sphere_measure(n)

    def integrand(rho):
        return omega * rho ** (n - 1) * (c * (r / rho) ** alpha) ** p

    val, _ = quad(integrand, a * r, r, epsabs=0.0, epsrel=1e-13, limit=200)
    return val
