"""Symmetry-reduced background geometries and the conformal Schouten transform.

A metric ``g = exp(-2u) g0`` is described by ``u`` sampled on a 1D grid:

* ``ROUND_SPHERE``: ``u(theta)`` on the unit sphere, cell-centred in ``[0, pi]``;
* ``PRODUCT_CIRCLE_SPHERE``: ``u(t)`` on ``S^1(L) x S^{n-1}``, periodic;
* ``RADIAL_EUCLIDEAN``: ``u(r)`` on flat ``R^n``, log-spaced in ``[r_min, r_max]``.

In each case the Schouten-type matrix ``W`` has one "radial" eigenvalue and
``n - 1`` equal tangential ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy.integrate import simpson
from scipy.special import comb, gammaln

from . import symfun
from .errors import DomainError


class Kind(str, enum.Enum):
    ROUND_SPHERE = "round_sphere"
    PRODUCT_CIRCLE_SPHERE = "product_circle_sphere"
    RADIAL_EUCLIDEAN = "radial_euclidean"


def sphere_volume(n: int) -> float:
    """Volume of the unit n-sphere ``S^n``."""
    return float(2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2))


def log_sphere_volume(n: int) -> float:
    return float(math.log(2.0) + 0.5 * (n + 1) * math.log(math.pi) - gammaln((n + 1) / 2))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeometryDescriptor:
    """Background manifold, dimension and grid."""

    kind: Kind
    n: int
    grid_size: int
    circle_length: float = 2.0 * math.pi
    radial_domain: tuple[float, float] = (1e-3, 1e3)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.n < 3:
            raise DomainError(f"dimension must be >= 3, got {self.n}")
        if self.grid_size < 16:
            raise DomainError(f"grid_size must be >= 16, got {self.grid_size}")
        if self.circle_length <= 0:
            raise DomainError("circle_length must be positive")
        r_min, r_max = self.radial_domain
        if not 0 < r_min < r_max:
            raise DomainError("radial domain needs 0 < r_min < r_max")

    @property
    def compact(self) -> bool:
        return self.kind is not Kind.RADIAL_EUCLIDEAN

    @cached_property
    def step(self) -> float:
        """Spacing of the uniform coordinate (theta, t or log r)."""
        N = self.grid_size
        if self.kind is Kind.ROUND_SPHERE:
            return math.pi / N
        if self.kind is Kind.PRODUCT_CIRCLE_SPHERE:
            return self.circle_length / N
        r_min, r_max = self.radial_domain
        return math.log(r_max / r_min) / (N - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        """theta, t or r at each node."""
        N, h = self.grid_size, self.step
        j = np.arange(N)
        if self.kind is Kind.ROUND_SPHERE:
            x = (j + 0.5) * h
        elif self.kind is Kind.PRODUCT_CIRCLE_SPHERE:
            x = j * h
        else:
            x = self.radial_domain[0] * np.exp(j * h)
        return _frozen(x)

    @cached_property
    def cot(self) -> np.ndarray:
        """cot(theta) on the sphere grid, zero elsewhere."""
        if self.kind is not Kind.ROUND_SPHERE:
            return _frozen(np.zeros(self.grid_size))
        return _frozen(1.0 / np.tan(self.nodes))

    @cached_property
    def base_weights(self) -> np.ndarray:
        """Quadrature weights for ``dg0`` (multiply by ``exp(-n u)`` for ``dg``)."""
        n, N, h = self.n, self.grid_size, self.step
        area = sphere_volume(n - 1)
        if self.kind is Kind.ROUND_SPHERE:
            theta = self.nodes
            if n % 2 == 1:
                # sin^{n-1} is a trig polynomial: the midpoint rule is spectral
                w = h * np.sin(theta) ** (n - 1)
            else:
                # Fejer's first rule in x = cos(theta) on the same nodes
                m = np.arange(1, N // 2 + 1)
                c = np.cos(2.0 * np.outer(theta, m)) / (4.0 * m ** 2 - 1.0)
                fw = (2.0 / N) * (1.0 - 2.0 * c.sum(axis=1))
                w = fw * np.sin(theta) ** (n - 2)
            return _frozen(area * w)
        if self.kind is Kind.PRODUCT_CIRCLE_SPHERE:
            return _frozen(np.full(N, area * h))
        r = self.nodes
        return _frozen(area * r ** n * simpson(np.eye(N), dx=h, axis=1))

    def background_eigenvalues(self) -> tuple[float, float]:
        """(radial, tangential) Schouten eigenvalues of ``g0``."""
        return {
            Kind.ROUND_SPHERE: (0.5, 0.5),
            Kind.PRODUCT_CIRCLE_SPHERE: (-0.5, 0.5),
            Kind.RADIAL_EUCLIDEAN: (0.0, 0.0),
        }[self.kind]

    def background_spectrum(self) -> np.ndarray:
        a, b = self.background_eigenvalues()
        return np.array([a] + [b] * (self.n - 1))


# fourth-order stencils
_D1_LEFT = np.array([[-25, 48, -36, 16, -3, 0], [-3, -10, 18, -6, 1, 0]]) / 12.0
_D2_LEFT = np.array([[45, -154, 214, -156, 61, -10], [10, -15, -4, 14, -6, 1]]) / 12.0


def _central(up: np.ndarray, h: float):
    """Central differences on a padded array (two ghosts each side)."""
    um2, um1, u0, up1, up2 = up[:-4], up[1:-3], up[2:-2], up[3:-1], up[4:]
    d1 = (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * h)
    d2 = (-um2 + 16.0 * um1 - 30.0 * u0 + 16.0 * up1 - up2) / (12.0 * h * h)
    return d1, d2


def uniform_derivatives(geom: GeometryDescriptor, f) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives in the grid's uniform coordinate."""
    f = np.asarray(f, dtype=float)
    if f.shape != (geom.grid_size,):
        raise DomainError(f"expected {geom.grid_size} node values, got {f.shape}")
    h = geom.step
    if geom.kind is Kind.ROUND_SPHERE:
        return _central(np.pad(f, 2, mode="symmetric"), h)
    if geom.kind is Kind.PRODUCT_CIRCLE_SPHERE:
        return _central(np.pad(f, 2, mode="wrap"), h)
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    d1[2:-2], d2[2:-2] = _central(f, h)
    head, tail = f[:6], f[-6:][::-1]
    d1[:2] = _D1_LEFT @ head / h
    d2[:2] = _D2_LEFT @ head / h ** 2
    d1[-2:] = (-(_D1_LEFT @ tail) / h)[::-1]
    d2[-2:] = (_D2_LEFT @ tail / h ** 2)[::-1]
    return d1, d2


@dataclass(frozen=True)
class ConformalField:
    """Node values of ``u`` with first and second derivatives.

    For the radial geometry the derivatives are taken with respect to ``r``.
    """

    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray


def derivatives(geom: GeometryDescriptor, u) -> ConformalField:
    """Build a :class:`ConformalField` from node values using 4th-order stencils."""
    u = np.array(u, dtype=float)
    d1, d2 = uniform_derivatives(geom, u)
    if geom.kind is Kind.RADIAL_EUCLIDEAN:
        r = geom.nodes
        d1, d2 = d1 / r, (d2 - d1) / r ** 2
    return ConformalField(_frozen(u), _frozen(d1), _frozen(d2))


def structured_sigma(a, b, n: int, k: int):
    """``sigma_k`` of the spectrum ``(a, b, ..., b)`` with ``n - 1`` copies of b."""
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = n - 1
    out = comb(m, k, exact=True) * b ** k
    if k >= 1:
        out = out + a * comb(m, k - 1, exact=True) * b ** (k - 1)
    return out


@dataclass(frozen=True)
class PointwiseSchouten:
    """Eigenvalues of ``g0^{-1} W`` node by node.

    ``radial`` holds the simple eigenvalue, ``tangential`` the one of
    multiplicity ``n - 1``.
    """

    radial: np.ndarray
    tangential: np.ndarray
    u: np.ndarray
    n: int

    @property
    def eigenvalues(self) -> np.ndarray:
        """Full spectra, shape ``(nodes, n)``."""
        tan = np.repeat(self.tangential[:, None], self.n - 1, axis=1)
        return np.concatenate([self.radial[:, None], tan], axis=1)

    def sigma(self, k: int) -> np.ndarray:
        """``sigma_k(W)`` per node."""
        return symfun.sigma_k(self.eigenvalues, k)

    def conformal_sigma_k(self, k: int) -> np.ndarray:
        """``sigma_k(g) = exp(2ku) sigma_k(W)`` per node."""
        return np.exp(2 * k * self.u) * self.sigma(k)

    def cone(self) -> symfun.ConeMembership:
        return symfun.cone_membership(self.eigenvalues)


def schouten_eigenvalues(geom: GeometryDescriptor, field: ConformalField) -> PointwiseSchouten:
    """Eigenvalues of ``W = Hess u + du (x) du - |du|^2/2 g0 + S(g0)``."""
    u, du, d2u = field.u, field.du, field.d2u
    s_rad, s_tan = geom.background_eigenvalues()
    half_sq = 0.5 * du * du
    radial = d2u + half_sq + s_rad
    if geom.kind is Kind.ROUND_SPHERE:
        theta = geom.nodes
        near_pole = np.abs(np.sin(theta)) < 1e-12
        shear = np.where(near_pole, d2u, geom.cot * du)
        tangential = shear - half_sq + s_tan
    elif geom.kind is Kind.PRODUCT_CIRCLE_SPHERE:
        tangential = -half_sq + s_tan
    else:
        tangential = du / geom.nodes - half_sq + s_tan
    return PointwiseSchouten(radial, tangential, u, geom.n)


def metric_hessian(geom: GeometryDescriptor, field: ConformalField, f):
    """Diagonal of ``Hess_g f`` in a ``g0``-orthonormal frame.

    ``g = exp(-2u) g0``; returns ``(radial, tangential)`` node arrays.
    """
    df, d2f = uniform_derivatives(geom, f)
    du = field.du
    if geom.kind is Kind.RADIAL_EUCLIDEAN:
        r = geom.nodes
        df, d2f = df / r, (d2f - df) / r ** 2
        tangential = df / r - du * df
    elif geom.kind is Kind.ROUND_SPHERE:
        tangential = geom.cot * df - du * df
    else:
        tangential = -du * df
    radial = d2f + du * df
    return radial, tangential


def volume_weights(geom: GeometryDescriptor, u) -> np.ndarray:
    """Quadrature weights of ``dg = exp(-n u) dg0`` at every node."""
    return geom.base_weights * np.exp(-geom.n * np.asarray(u, dtype=float))


def volume_element(geom: GeometryDescriptor, field: ConformalField, node: int) -> float:
    """Quadrature weight of ``dg`` at a single node."""
    return float(geom.base_weights[node] * math.exp(-geom.n * field.u[node]))


def radial_sigma_k(n: int, k: int, r, alpha, alpha_prime, u):
    """``sigma_k(exp(-2u)|dx|^2)`` for a radial ``u`` with ``u' = alpha / r``.

    Uses ``b = (2 alpha - alpha^2) / (2 r^2)`` and the radial eigenvalue
    ``alpha'/r - b``; in factored form this is
    ``C * b^k * (n - 2k + 2k r alpha' / (2 alpha - alpha^2))`` with
    ``C = (n-1)! / (k! (n-k)!)``. The expanded form below has no denominator,
    so it stays finite where ``2 alpha - alpha^2`` vanishes.
    """
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("radius must be positive")
    alpha = np.asarray(alpha, dtype=float)
    b = (2.0 * alpha - alpha * alpha) / (2.0 * r * r)
    a = np.asarray(alpha_prime, dtype=float) / r - b
    out = np.exp(2 * k * np.asarray(u, dtype=float)) * structured_sigma(a, b, n, k)
    return out if np.ndim(out) else float(out)
