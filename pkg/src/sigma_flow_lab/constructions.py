"""Explicit radial test metrics: cone-preserving necks, sphere-cylinder bubbles
and their gluing into a round sphere.

Every profile is a radial conformal exponent ``U(r)`` of ``exp(-2U)|dx|^2``,
described through its log-slope ``r U'(r)``. In ``s = log r`` the k-th
curvature is positive exactly when ``0 < r U' < 2`` and::

    n - 2k + k dL/ds > 0,    L = log(rU' / (2 - rU')),

which is the quantity the builders below keep positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ConstructionInfeasibleError, DomainError, GluingFailureError
from .geometry import radial_sigma_k, sphere_volume, structured_sigma

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _gl_integrate(fn, lo, hi, panel: float = 0.5):
    """Composite Gauss-Legendre of a vectorised ``fn`` over ``[lo, hi]`` (arrays allowed).

    All intervals use the same panel count, set by the widest one.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    shape = np.broadcast(lo, hi).shape
    if lo.size == 0 or hi.size == 0:
        return np.zeros(shape)
    panels = max(1, int(math.ceil(float(np.max(np.abs(hi - lo))) / panel)))
    total = np.zeros(shape)
    for i in range(panels):
        pa = lo + (hi - lo) * (i / panels)
        pb = lo + (hi - lo) * ((i + 1) / panels)
        mid, half = 0.5 * (pa + pb), 0.5 * (pb - pa)
        x = mid[..., None] + half[..., None] * _GL_X
        total = total + half * np.sum(_GL_W * fn(x), axis=-1)
    return total


def _hermite(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau * tau * (3.0 - 2.0 * tau)


def _hermite_slope(tau):
    inside = (tau > 0) & (tau < 1)
    return np.where(inside, 6.0 * tau * (1.0 - tau), 0.0)


def positivity_factor(n: int, k: int, slope, slope_s):
    """``n - 2k + 2k slope_s / (slope (2 - slope))`` for a log-slope ``slope = rU'``."""
    slope = np.asarray(slope, dtype=float)
    return n - 2 * k + 2 * k * np.asarray(slope_s) / (slope * (2.0 - slope))


# ---------------------------------------------------------------------------
# background


@dataclass(frozen=True)
class RadialBackground:
    """Radial conformal exponent ``u0`` of a background metric on the unit disk.

    ``alpha0 = r u0'`` and ``alpha0_s`` is its derivative in ``log r``.
    """

    name: str
    u0: Callable
    alpha0: Callable
    alpha0_s: Callable

    def gradient_bound(self, samples: int = 2001) -> float:
        """``max |grad u0|`` over sampled radii of the unit disk."""
        r = np.linspace(1e-6, 1.0, samples)
        return float(np.max(np.abs(self.alpha0(r) / r)))

    def check_admissible(self, n: int, k: int, samples: int = 2001):
        r = np.geomspace(1e-6, 1.0, samples)
        a = self.alpha0(r)
        b = 0.5 * (2 * a - a * a)
        for j in range(1, k + 1):
            if np.any(structured_sigma(self.alpha0_s(r) - b, b, n, j) <= 0):
                raise DomainError(f"background {self.name} is not in Gamma_{k}^+ on the disk")


def round_sphere_chart() -> RadialBackground:
    """The unit sphere in a stereographic chart: ``u0 = log((1 + r^2) / 2)``."""

    def u0(r):
        return np.log1p(np.asarray(r, dtype=float) ** 2) - math.log(2.0)

    def alpha0(r):
        r2 = np.asarray(r, dtype=float) ** 2
        return 2.0 * r2 / (1.0 + r2)

    def alpha0_s(r):
        r2 = np.asarray(r, dtype=float) ** 2
        return 4.0 * r2 / (1.0 + r2) ** 2

    return RadialBackground("round_sphere", u0, alpha0, alpha0_s)


# ---------------------------------------------------------------------------
# shared radial evaluation


class _Radial:
    """Subclasses define ``u``, ``log_slope`` (= rU') and ``log_slope_s``."""

    def sigma_k(self, n: int, k: int, r):
        """``sigma_k(exp(-2U)|dx|^2)`` at the radii ``r``."""
        r = np.asarray(r, dtype=float)
        return radial_sigma_k(n, k, r, self.log_slope(r), self.log_slope_s(r) / r, self.u(r))

    def scaled_sigma(self, n: int, k: int, r):
        """``r^{2k} exp(-2kU) sigma_k(g)``: same sign as sigma_k, never overflows."""
        r = np.asarray(r, dtype=float)
        a = self.log_slope(r)
        b = 0.5 * (2.0 * a - a * a)
        return structured_sigma(self.log_slope_s(r) - b, b, n, k)

    def positivity(self, n: int, k: int, r):
        r = np.asarray(r, dtype=float)
        return positivity_factor(n, k, self.log_slope(r), self.log_slope_s(r))

    def table(self, n: int, k: int, r) -> np.ndarray:
        """Rows ``(r, u, rU', sigma_k)`` for export."""
        r = np.asarray(r, dtype=float)
        return np.column_stack([r, self.u(r), self.log_slope(r), self.sigma_k(n, k, r)])


# ---------------------------------------------------------------------------
# bubble


@dataclass(frozen=True)
class BubbleProfile(_Radial):
    """Round sphere outside ``delta``, cylinder inside ``delta1``, power-law neck between."""

    delta: float
    eps0: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.eps0 < 1:
            raise DomainError(f"eps0 must lie in (0, 1), got {self.eps0}")

    @property
    def decay(self) -> float:
        return 1.0 - self.eps0

    @property
    def delta1(self) -> float:
        return self.delta ** ((3.0 - self.eps0) / self.decay)

    @property
    def b0(self) -> float:
        d, p = self.delta, self.decay
        return (-math.log1p(d * d) - (2.0 / p) * math.log((1.0 + d * d) / 2.0)
                + (3.0 - self.eps0) / p * math.log(d))

    @property
    def breakpoints(self) -> tuple:
        return (self.delta1, self.delta)

    def _D(self) -> float:
        return self.delta ** (3.0 - self.eps0)

    def u(self, r):
        r = np.asarray(r, dtype=float)
        p, D = self.decay, self._D()
        outer = np.log1p(r * r) + self.b0
        with np.errstate(divide="ignore", over="ignore"):
            middle = (-(2.0 / p) * np.log((1.0 + D * r ** (-p)) / 2.0)
                      + (3.0 - self.eps0) / p * math.log(self.delta))
            inner = np.log(r)
        return np.where(r >= self.delta, outer, np.where(r > self.delta1, middle, inner))

    def alpha(self, r):
        """``r u'``: ``2r^2/(1+r^2)``, then ``2D/(D + r^{1-eps0})``, then 1."""
        r = np.asarray(r, dtype=float)
        D = self._D()
        outer = 2.0 * r * r / (1.0 + r * r)
        middle = 2.0 * D / (D + r ** self.decay)
        return np.where(r >= self.delta, outer, np.where(r > self.delta1, middle, 1.0))

    def alpha_complement(self, r):
        """``2 - alpha`` without cancellation."""
        r = np.asarray(r, dtype=float)
        D = self._D()
        outer = 2.0 / (1.0 + r * r)
        x = r ** self.decay
        middle = 2.0 * x / (D + x)
        return np.where(r >= self.delta, outer, np.where(r > self.delta1, middle, 1.0))

    def alpha_s(self, r):
        """Derivative of ``alpha`` in ``log r``."""
        r = np.asarray(r, dtype=float)
        p, D = self.decay, self._D()
        outer = 4.0 * r * r / (1.0 + r * r) ** 2
        x = r ** p
        middle = -2.0 * D * p * x / (D + x) ** 2
        return np.where(r >= self.delta, outer, np.where(r > self.delta1, middle, 0.0))

    def log_slope(self, r):
        return self.alpha(r)

    def log_slope_s(self, r):
        return self.alpha_s(r)

    def admissible(self, n: int, k: int) -> bool:
        """Whether the neck band has positive sigma_k: ``k (1 - eps0) < n - 2k``."""
        return self.decay * k < n - 2 * k


# ---------------------------------------------------------------------------
# neck


@dataclass(frozen=True)
class NeckProfile(_Radial):
    """Bends a background near the origin into an exact cylinder ``U = a + log r``.

    ``alpha`` is the blending profile: 0 for ``r >= r0``, a Hermite ramp on
    ``[r1, r0]``, the power law ``alpha_h1`` on ``[r_b, r1]``, a slope blend on
    ``[r2, r_b]`` that lands exactly on 1, and 1 for ``r <= r2``. The metric's
    log-slope is ``alpha + (1 - alpha) alpha0`` so both ends are exact.
    """

    epsilon: float
    delta: float
    r0: float
    r1: float
    r2: float
    r3: float
    smoothing_width: float
    background: RadialBackground = dc_field(repr=False)
    n: int = 5
    k: int = 2
    r_b: float = 0.0
    anchors: dict = dc_field(default_factory=dict, repr=False)

    @property
    def power(self) -> float:
        return 0.5 * (1.0 - self.epsilon)

    @property
    def amplitude(self) -> float:
        return 2.0 * (1.0 - self.epsilon)

    @property
    def cylinder_constant(self) -> float:
        return self.anchors["a"]

    @property
    def breakpoints(self) -> tuple:
        return (self.r2, self.r_b, self.r1, self.r0)

    # power-law band -------------------------------------------------------
    def alpha_h1(self, r):
        r = np.asarray(r, dtype=float)
        return self.amplitude * self.delta / (self.delta + r ** self.power)

    def alpha_h1_s(self, r):
        r = np.asarray(r, dtype=float)
        x = r ** self.power
        return -self.amplitude * self.delta * self.power * x / (self.delta + x) ** 2

    def h1_residual(self, r, form: str = "consistent"):
        """Residual of the first-order ODE for the power-law band.

        ``"consistent"``: ``(2 - 2eps) a - a^2 + 4 r a'``, which vanishes.
        ``"stated"``: ``(2 - eps) a - a^2 + 4 (r a' - eps a)``, which equals
        ``-3 eps a`` for this profile.
        """
        a, a_s, e = self.alpha_h1(r), self.alpha_h1_s(r), self.epsilon
        if form == "consistent":
            return (2.0 - 2.0 * e) * a - a * a + 4.0 * a_s
        if form == "stated":
            return (2.0 - e) * a - a * a + 4.0 * (a_s - e * a)
        raise DomainError(f"unknown form {form!r}")

    # blending profile -----------------------------------------------------
    def _ramp(self, r):
        s = np.log(r)
        s0, s1 = math.log(self.r0), math.log(self.r1)
        tau = (s0 - s) / (s0 - s1)
        h, h_s = _hermite(tau), -_hermite_slope(tau) / (s0 - s1)
        aH = self.alpha_h1(r)
        return h * aH, h * self.alpha_h1_s(r) + h_s * aH

    def _window_alpha_s(self, s):
        tau = (s - math.log(self.r2)) / (math.log(self.r_b) - math.log(self.r2))
        return _hermite(tau) * self.alpha_h1_s(np.exp(s))

    def _window_alpha(self, s):
        sb = math.log(self.r_b)
        return float(self.alpha_h1(self.r_b)) - _gl_integrate(self._window_alpha_s, s, sb, 0.25)

    def _pieces(self, r, which):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r) if which else np.ones_like(r)
        m = (r >= self.r1) & (r < self.r0)
        out[m] = self._ramp(r[m])[which]
        m = (r >= self.r_b) & (r < self.r1)
        out[m] = (self.alpha_h1, self.alpha_h1_s)[which](r[m])
        m = (r > self.r2) & (r < self.r_b)
        s = np.log(r[m])
        out[m] = self._window_alpha_s(s) if which else self._window_alpha(s)
        out[r >= self.r0] = 0.0
        return out

    def alpha(self, r):
        return self._pieces(r, 0)

    def alpha_s(self, r):
        """Derivative of ``alpha`` in ``log r``."""
        return self._pieces(r, 1)

    def alpha_prime(self, r):
        return self.alpha_s(r) / np.asarray(r, dtype=float)

    def log_slope(self, r):
        a, a0 = self.alpha(r), self.background.alpha0(r)
        return a + (1.0 - a) * a0

    def log_slope_s(self, r):
        a, a0 = self.alpha(r), self.background.alpha0(r)
        return self.alpha_s(r) * (1.0 - a0) + (1.0 - a) * self.background.alpha0_s(r)

    def u(self, r):
        r = np.asarray(r, dtype=float)
        s = np.log(r)
        A = self.anchors
        out = np.empty_like(r)
        m = r >= self.r0
        out[m] = self.background.u0(r[m])
        slope = lambda x: self.log_slope(np.exp(x))  # noqa: E731
        m = (r >= self.r1) & (r < self.r0)
        out[m] = A["u_r0"] - _gl_integrate(slope, s[m], math.log(self.r0), 0.25)
        m = (r >= self.r_b) & (r < self.r1)
        out[m] = A["u_r1"] - _gl_integrate(slope, s[m], math.log(self.r1))
        m = (r > self.r2) & (r < self.r_b)
        out[m] = A["u_rb"] - _gl_integrate(slope, s[m], math.log(self.r_b), 0.1)
        m = r <= self.r2
        out[m] = A["a"] + s[m]
        return out

    def unsmoothed(self) -> "NeckProfile":
        """Same neck with the power law running down to its crossing of 1, unsmoothed."""
        crossing = (self.delta * (self.amplitude - 1.0)) ** (1.0 / self.power)
        prof = NeckProfile(self.epsilon, self.delta, self.r0, self.r1, crossing,
                           crossing * math.exp(-1.0), 0.0, self.background, self.n, self.k,
                           r_b=crossing, anchors=dict(self.anchors))
        return prof


def build_neck(epsilon: float, background: RadialBackground, n: int = 5, k: int = 2,
               smoothing_width: float | None = None, bisection_steps: int = 60) -> NeckProfile:
    """Construct a neck that keeps ``sigma_k > 0`` on the punctured disk.

    ``r0 = min(1/2, C1 eps)`` with ``C1`` the background gradient bound and
    ``r1 = r0 e^{-2}``. ``delta`` is the largest value (found by bisection) for
    which the ramp on ``[r1, r0]`` keeps half of the power-law band's own
    positivity margin ``n - 2k - k(1 - eps)/2``. ``smoothing_width`` is the
    width in ``log r`` of the slope blend onto the cylinder.
    """
    if not 0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    background.check_admissible(n, k)
    band_margin = n - 2 * k - k * 0.5 * (1.0 - epsilon)
    if band_margin <= 0:
        raise ConstructionInfeasibleError(
            f"power-law band cannot keep sigma_{k} > 0: n - 2k - k(1-eps)/2 = {band_margin:.4g}",
            margin=band_margin)
    C1 = background.gradient_bound()
    r0 = min(0.5, C1 * epsilon)
    r1 = r0 * math.exp(-2.0)
    p, A = 0.5 * (1.0 - epsilon), 2.0 * (1.0 - epsilon)
    delta_max = r1 ** p / (A - 1.0)
    ramp_grid = np.geomspace(r1, r0, 801)

    def proto(delta, r2=r1, r_b=r1, w=0.0):
        return NeckProfile(epsilon, delta, r0, r1, r2, r2 * math.exp(-1.0), w, background,
                           n, k, r_b=r_b)

    def margin(log_delta):
        prof = proto(math.exp(log_delta))
        a, a_s = prof.log_slope(ramp_grid), prof.log_slope_s(ramp_grid)
        if np.any(a <= 0) or np.any(a >= 2):
            return -math.inf
        return float(np.min(positivity_factor(n, k, a, a_s)))

    target = 0.5 * band_margin
    lo, hi = math.log(delta_max) - 60.0, math.log(delta_max * (1 - 1e-9))
    if margin(lo) < target:
        raise ConstructionInfeasibleError(
            f"no delta keeps the ramp margin above {target:.4g}", margin=margin(lo))
    if margin(hi) >= target:
        lo = hi
    else:
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            if margin(mid) >= target:
                lo = mid
            else:
                hi = mid
    delta = math.exp(lo)
    s_cross = math.log(delta * (A - 1.0)) / p
    w = smoothing_width if smoothing_width is not None else 0.25 * (math.log(r1) - s_cross)
    if w <= 0:
        raise DomainError(f"smoothing_width must be positive, got {w}")

    def landing(sb):
        prof = proto(delta, r2=math.exp(sb - w), r_b=math.exp(sb), w=w)
        return float(prof._window_alpha(np.array([sb - w]))[0]) - 1.0

    top = min(s_cross + w, math.log(r1))
    if landing(top) >= 0:
        raise ConstructionInfeasibleError(
            f"smoothing width {w:.4g} does not fit inside the power-law band", margin=w)
    sb = brentq(landing, s_cross, top, xtol=1e-14, rtol=1e-15)
    neck = proto(delta, r2=math.exp(sb - w), r_b=math.exp(sb), w=w)
    # anchor u by integrating the log-slope inward from r0
    slope = lambda x: neck.log_slope(np.exp(x))  # noqa: E731
    anchors = {"u_r0": float(background.u0(r0))}
    anchors["u_r1"] = anchors["u_r0"] - float(_gl_integrate(slope, math.log(r1), math.log(r0), 0.1))
    anchors["u_rb"] = anchors["u_r1"] - float(_gl_integrate(slope, sb, math.log(r1), 0.1))
    u_r2 = anchors["u_rb"] - float(_gl_integrate(slope, sb - w, sb, 0.05))
    anchors["a"] = u_r2 - (sb - w)
    neck = NeckProfile(epsilon, delta, r0, r1, neck.r2, neck.r3, w, background, n, k,
                       r_b=neck.r_b, anchors=anchors)
    lowest, where, _ = verify_positive(neck, n, k)
    if not lowest > 0:
        raise ConstructionInfeasibleError(
            f"constructed neck has sigma_{k} = {lowest:.3e} at r = {where:.4g}", margin=lowest)
    return neck


# ---------------------------------------------------------------------------
# checks and integrals


def verify_positive(profile, n: int, k: int, grid=None):
    """Minimum of ``sigma_k`` over a radius grid and where it occurs.

    ``grid`` is an array of radii or ``None`` for 10^4 log-spaced radii around
    the profile's junctions. Returns ``(min_sigma_k, argmin_r, min_scaled)``
    where ``min_scaled`` is the minimum of the overflow-free
    ``r^{2k} exp(-2kU) sigma_k`` (same sign).
    """
    if grid is None:
        bps = [b for b in profile.breakpoints if b > 0]
        grid = np.geomspace(min(bps) * 1e-2, min(max(bps) * 1e2, 1e3), 10_000)
    r = np.asarray(grid, dtype=float)
    sig = profile.sigma_k(n, k, r)
    i = int(np.argmin(sig))
    return float(sig[i]), float(r[i]), float(np.min(profile.scaled_sigma(n, k, r)))


def _band_integral(profile, n, j, lo, hi):
    def integrand(s):
        r = np.exp(s)
        a = profile.log_slope(r)
        b = 0.5 * (2.0 * a - a * a)
        sig = structured_sigma(profile.log_slope_s(r) - b, b, n, j) if j else 1.0
        return np.exp(-(n - 2 * j) * (profile.u(r) - s)) * sig

    val = _gl_integrate(integrand, math.log(lo), math.log(hi), 0.1)
    return sphere_volume(n - 1) * float(val)


def bubble_bounds(profile: BubbleProfile, n: int, k: int):
    """Volume and sigma_k-integral of the bubble's neck band ``delta1 < r < delta``."""
    if not 2 * k < n:
        raise DomainError(f"bubble bounds need k < n/2, got n={n}, k={k}")
    lo, hi = profile.delta1, profile.delta
    return _band_integral(profile, n, 0, lo, hi), _band_integral(profile, n, k, lo, hi)


def sigma_band_exponent(n: int, k: int, eps0: float) -> float:
    """Exact small-delta exponent of the bubble band's sigma_k integral for ``k(1-eps0) < n-2k``.

    The integrand peaks at the band's outer edge, giving
    ``-(3-eps0)(n-2k)/(1-eps0) + (3-eps0)k + n - 2k - (1-eps0)k``.
    """
    p = 1.0 - eps0
    return -(3.0 - eps0) * (n - 2 * k) / p + (3.0 - eps0) * k + (n - 2 * k) - p * k


def sphere_exterior_integral(n: int, k: int, delta: float) -> float:
    """``int_{|y| >= delta} sigma_k(g_S) dvol(g_S)`` for ``g_S = (1+|y|^2)^{-2}|dy|^2``."""
    inner = quad(lambda r: r ** (n - 1) * (1 + r * r) ** (-n), 0.0, delta,
                 epsabs=0, epsrel=1e-13)[0]
    total = sphere_volume(n) / 2.0 ** n
    return math.comb(n, k) * 2.0 ** k * (total - sphere_volume(n - 1) * inner)


@dataclass(frozen=True)
class GluedProfile(_Radial):
    """Background with a neck inserted and an inverted, rescaled bubble inside ``r3/2``."""

    neck: NeckProfile
    bubble: BubbleProfile

    @property
    def scale(self) -> float:
        return self.bubble.delta1 / self.neck.r3

    @property
    def inversion(self) -> float:
        return self.neck.r3 ** 2 / 2.0

    def _R(self, r):
        return self.scale * self.inversion / np.asarray(r, dtype=float)

    @property
    def breakpoints(self) -> tuple:
        lc = self.scale * self.inversion
        return (lc / self.bubble.delta, self.neck.r3 / 2.0) + tuple(self.neck.breakpoints)

    def _split(self, r, outer, inner):
        r = np.asarray(r, dtype=float)
        m = r < self.neck.r3 / 2.0
        out = np.empty_like(r)
        out[~m] = outer(r[~m])
        out[m] = inner(r[m])
        return out

    def u(self, r):
        shift = self.neck.cylinder_constant - math.log(self.scale) - math.log(self.inversion)
        return self._split(r, self.neck.u,
                           lambda x: self.bubble.u(self._R(x)) + shift + 2.0 * np.log(x))

    def log_slope(self, r):
        return self._split(r, self.neck.log_slope,
                           lambda x: self.bubble.alpha_complement(self._R(x)))

    def log_slope_s(self, r):
        # d/ds of 2 - alpha_b(R) with dR/ds = -R
        return self._split(r, self.neck.log_slope_s, lambda x: self.bubble.alpha_s(self._R(x)))

    def leading_sigma_integral(self, n: int, k: int) -> float:
        """Sphere cap of the bubble: ``exp(-(n-2k)(a + b0)) int_{|y|>=delta} sigma_k(g_S)``."""
        shift = self.neck.cylinder_constant + self.bubble.b0
        return math.exp(-(n - 2 * k) * shift) * sphere_exterior_integral(n, k, self.bubble.delta)

    def log_integrals(self, n: int, ks, span: float = 20.0, panel: float = 0.25):
        """``{j: (log|int sigma_j dg|, sign)}`` plus node radii and scaled sigma_1..max(ks)."""
        bps = sorted(set(self.breakpoints))
        lo, hi = math.log(bps[0]) - span, math.log(bps[-1]) + span
        edges = sorted(set([lo] + [math.log(b) for b in bps] + [hi]))
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            cuts = np.linspace(a, b, max(1, int(math.ceil((b - a) / panel))) + 1)
            for c, d in zip(cuts[:-1], cuts[1:]):
                nodes.append(0.5 * (c + d) + 0.5 * (d - c) * _GL_X)
                weights.append(0.5 * (d - c) * _GL_W)
        s, w = np.concatenate(nodes), np.concatenate(weights)
        r = np.exp(s)
        U = self.u(r)
        a = self.log_slope(r)
        b = 0.5 * (2.0 * a - a * a)
        radial = self.log_slope_s(r) - b
        out = {}
        for j in ks:
            sig = structured_sigma(radial, b, n, j)
            expo = -(n - 2 * j) * (U - s)
            top = float(expo.max())
            val = float(np.dot(w, np.exp(expo - top) * sig))
            out[j] = (top + math.log(sphere_volume(n - 1) * abs(val)), math.copysign(1.0, val))
        scaled = np.stack([structured_sigma(radial, b, n, j) for j in range(1, max(ks) + 1)])
        return out, r, scaled


def glue(neck: NeckProfile, bubble: BubbleProfile) -> GluedProfile:
    return GluedProfile(neck, bubble)


def glued_sigma_integral(neck: NeckProfile, bubble: BubbleProfile, n: int, k: int) -> float:
    """Signed ``int sigma_k(g) dg`` of the glued metric."""
    logs, _, _ = glue(neck, bubble).log_integrals(n, [k])
    lg, sign = logs[k]
    return sign * math.exp(lg)


def glue_and_quotient(base: RadialBackground, profile: BubbleProfile, neck: NeckProfile,
                      k: int, l: int, check_cone: bool = True) -> float:
    """``(int sigma_l)^{-(n-2k)/(n-2l)} int sigma_k`` of the glued metric.

    The dimension is the one the neck was built for. Raises
    :class:`GluingFailureError` naming the radius if some node leaves
    ``Gamma_k^+`` (skipped with ``check_cone=False``).
    """
    n = neck.n
    if not (0 <= l < k and 2 * k < n):
        raise DomainError(f"gluing needs 0 <= l < k < n/2, got n={n}, k={k}, l={l}")
    if neck.background is not base:
        raise DomainError("neck was built on a different background")
    logs, r, scaled = glue(neck, profile).log_integrals(n, sorted({k, l}))
    if check_cone:
        scaled = scaled[:k]
        if np.any(scaled <= 0):
            j, i = np.unravel_index(np.argmin(scaled), scaled.shape)
            raise GluingFailureError(
                f"glued metric leaves Gamma_{k}^+ at r = {r[i]:.6g} "
                f"(scaled sigma_{j + 1} = {scaled[j, i]:.3e})",
                node=int(i), margin=float(scaled[j, i]), k=k, where=float(r[i]))
    (lk, sk), (ll, sl) = logs[k], logs[l]
    if sk < 0 or sl < 0:
        raise GluingFailureError("a curvature integral of the glued metric is negative",
                                 node=-1, margin=-1.0, k=k, where=math.nan)
    return math.exp(lk - (n - 2 * k) / (n - 2 * l) * ll)
