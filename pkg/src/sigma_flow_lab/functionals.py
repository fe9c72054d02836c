"""Global curvature integrals, normalised functionals and sharp constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from . import symfun
from .errors import ConeViolationError, DomainError
from .geometry import (ConformalField, GeometryDescriptor, Kind, derivatives,
                       schouten_eigenvalues, sphere_volume, volume_weights)


def omega(n: int) -> float:
    """Volume of the unit n-sphere."""
    return sphere_volume(n)


def _check_kl(n: int, k: int, l: int):
    if not (0 <= l < k <= n):
        raise DomainError(f"need 0 <= l < k <= n, got n={n}, k={k}, l={l}")


def sobolev_constant(n: int, k: int, l: int) -> float:
    """Sharp constant of the Sobolev-type inequality (part A), attained by the round sphere.

    ``F_{k,l}`` of the unit sphere raised to ``1/(n-2k)``.
    """
    _check_kl(n, k, l)
    if not 2 * k < n:
        raise DomainError(f"Sobolev-type constant (part A) needs k < n/2, got n={n}, k={k}")
    w = omega(n)
    expo = (k - l) / ((n - 2 * k) * (n - 2 * l))
    return float(comb(n, k) ** (1.0 / (n - 2 * k)) * comb(n, l) ** (-1.0 / (n - 2 * l))
                 * (w * w / 2.0 ** n) ** expo)


def quermass_constant(n: int, k: int, l: int) -> float:
    """Constant of the quermassintegral-type inequality (part B)."""
    _check_kl(n, k, l)
    if not (1 <= l and n <= 2 * k):
        raise DomainError(
            f"quermassintegral-type constant (part B) needs n/2 <= k and l >= 1, "
            f"got n={n}, k={k}, l={l}")
    return float(comb(n, k) ** (1.0 / k) * comb(n, l) ** (-1.0 / l))


def moser_trudinger_constant(n: int) -> float:
    """``integral of sigma_{n/2}`` over the unit sphere (part C)."""
    if n < 3 or n % 2:
        raise DomainError(f"Moser-Trudinger-type constant (part C) needs even n >= 4, got {n}")
    return float(omega(n) / 2.0 ** (n // 2) * comb(n, n // 2))


@dataclass(frozen=True)
class SharpConstants:
    """Closed-form constants; ``None`` where a constant is undefined for (n, k, l)."""

    n: int
    k: int
    l: int
    omega_n: float
    C_S_sphere: float | None
    quermass_const: float | None
    C_MT: float | None


def sharp_constants(n: int, k: int, l: int) -> SharpConstants:
    """Evaluate every constant that is defined for ``(n, k, l)``."""
    if n < 3:
        raise DomainError(f"dimension must be >= 3, got {n}")
    _check_kl(n, k, l)

    def maybe(fn, *args):
        try:
            return fn(*args)
        except DomainError:
            return None

    return SharpConstants(n, k, l, omega(n), maybe(sobolev_constant, n, k, l),
                          maybe(quermass_constant, n, k, l), maybe(moser_trudinger_constant, n))


@dataclass(frozen=True)
class FunctionalSnapshot:
    """Global quantities of one conformal metric.

    ``integral_sigma``, ``F_k`` and ``tilde_F_k`` are keyed by j = 0..k.
    ``tilde_F_k[n/2]`` is the path energy on the round sphere and NaN elsewhere.
    """

    vol: float
    integral_sigma: dict
    F_k: dict
    tilde_F_k: dict
    r_kl: float
    r_tilde_kl: float
    k: int
    l: int


def _cone_check(spec, k: int):
    cone = spec.cone()
    bad = np.flatnonzero(cone.max_k < k)
    if bad.size:
        node = int(bad[np.argmin(cone.margin[bad])])
        raise ConeViolationError(
            f"field leaves Gamma_{k}^+ at node {node} (margin {cone.margin[node]:.3e})",
            node=node, margin=float(cone.margin[node]), k=k)


def curvature_integrals(geom: GeometryDescriptor, field: ConformalField, ks) -> dict:
    """``{j: integral of sigma_j(g) dg}`` without any cone check."""
    spec = schouten_eigenvalues(geom, field)
    w = volume_weights(geom, field.u)
    s = symfun.elementary_symmetric(spec.eigenvalues)
    return {j: float(np.dot(w, np.exp(2 * j * field.u) * s[:, j])) for j in ks}


def snapshot(geom: GeometryDescriptor, field: ConformalField, k: int, l: int) -> FunctionalSnapshot:
    """All integrals and normalised functionals of ``g = exp(-2u) g0``.

    Raises :class:`ConeViolationError` naming the worst node if the field is
    not in ``Gamma_k^+`` everywhere.
    """
    n = geom.n
    _check_kl(n, k, l)
    spec = schouten_eigenvalues(geom, field)
    _cone_check(spec, k)
    u = field.u
    w = volume_weights(geom, u)
    s = symfun.elementary_symmetric(spec.eigenvalues)
    vol = float(w.sum())
    ints, F, tF = {}, {}, {}
    for j in range(k + 1):
        ints[j] = float(np.dot(w, np.exp(2 * j * u) * s[:, j]))
        F[j] = vol ** (-(n - 2 * j) / n) * ints[j]
        if 2 * j != n:
            tF[j] = ints[j] / (n - 2 * j)
        elif geom.kind is Kind.ROUND_SPHERE:
            tF[j] = energy_n_half(geom, u)
        else:
            tF[j] = math.nan
    # log of sigma_k(g)/sigma_l(g) formed from logs of positive values
    log_ratio = np.log(s[:, k]) - np.log(s[:, l]) + 2 * (k - l) * u
    wl = w * np.exp(2 * l * u) * s[:, l]
    r_kl = math.exp(float(np.dot(wl, log_ratio) / wl.sum()))
    return FunctionalSnapshot(vol, ints, F, tF, r_kl, ints[k] / ints[l], k, l)


def energy_n_half(geom: GeometryDescriptor, u, *, nodes: int = 16,
                  tolerance: float = 1e-10) -> float:
    """Path energy ``-int_0^1 int sigma_{n/2}(g_t) u dg_t dt`` with ``g_t = exp(-2tu) g0``.

    Only defined on the round sphere of even dimension. The path may touch the
    closure of the cone: ``sigma_j(g_t) >= -tolerance * scale`` is accepted.
    """
    n = geom.n
    if geom.kind is not Kind.ROUND_SPHERE or n % 2:
        raise DomainError("path energy needs the round sphere in even dimension")
    u = np.asarray(u, dtype=float)
    m = n // 2
    x, wt = np.polynomial.legendre.leggauss(nodes)
    ts, wt = 0.5 * (x + 1.0), 0.5 * wt
    total = 0.0
    for t, c in zip(ts, wt):
        fld = derivatives(geom, t * u)
        spec = schouten_eigenvalues(geom, fld)
        s = symfun.elementary_symmetric(spec.eigenvalues)[:, 1:m + 1]
        scale = np.maximum(1.0, np.abs(s).max())
        if np.any(s < -tolerance * scale):
            node, j = np.unravel_index(np.argmin(s), s.shape)
            raise ConeViolationError(
                f"path leaves the closed cone at t={t:.4f}, node {node} "
                f"(sigma_{j + 1} = {s[node, j]:.3e})",
                node=int(node), margin=float(s[node, j]), k=m, where=float(t))
        # exp(2m tu) from sigma_m(g_t) cancels exp(-n tu) from dg_t
        total += c * float(np.dot(geom.base_weights, s[:, m - 1] * u))
    return -total


def quotient_functional(geom: GeometryDescriptor, field: ConformalField, k: int, l: int) -> float:
    """Scale-invariant quotient ``(int sigma_l)^{-(n-2k)/(n-2l)} int sigma_k``."""
    n = geom.n
    _check_kl(n, k, l)
    if 2 * k == n or 2 * l == n:
        raise DomainError("quotient functional needs k != n/2 and l != n/2")
    snap = snapshot(geom, field, k, l)
    ik, il = snap.integral_sigma[k], snap.integral_sigma[l]
    return float(ik * il ** (-(n - 2 * k) / (n - 2 * l)))
