"""Randomised inequality suites on the symmetry-reduced geometries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import symfun
from .constructions import BubbleProfile, build_neck, glue_and_quotient, round_sphere_chart
from .errors import ConeViolationError, GluingFailureError
from .functionals import (energy_n_half, moser_trudinger_constant, quermass_constant,
                          snapshot, sobolev_constant)
from .geometry import GeometryDescriptor, Kind, derivatives


def random_symmetric_field(geom: GeometryDescriptor, rng: np.random.Generator,
                           amplitude: float, modes: int = 4) -> np.ndarray:
    """``amplitude * sum_j c_j cos(j x)`` with decaying random ``c_j``, sup-normalised.

    On the round sphere ``x`` is the polar angle, so every term is a smooth
    function of the height; on the product ``x = 2 pi t / L``.
    """
    x = geom.nodes if geom.kind is Kind.ROUND_SPHERE else 2 * math.pi * geom.nodes / geom.circle_length
    c = rng.normal(size=modes) / np.arange(1, modes + 1) ** 2
    phase = rng.uniform(0, 2 * math.pi, modes) if geom.kind is not Kind.ROUND_SPHERE else np.zeros(modes)
    u = sum(cj * np.cos((j + 1) * x + pj) for j, (cj, pj) in enumerate(zip(c, phase)))
    return amplitude * u / np.max(np.abs(u))


def admissible_fields(geom: GeometryDescriptor, rng: np.random.Generator, k: int, count: int,
                      max_amplitude: float = 0.4, accept=None, max_tries: int = 100_000):
    """Rejection-sample ``count`` fields in ``Gamma_k^+``; ``accept(u)`` may veto further."""
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"only {len(out)} admissible fields after {max_tries} draws")
        u = random_symmetric_field(geom, rng, rng.uniform(0.0, max_amplitude))
        try:
            snapshot(geom, derivatives(geom, u), k, 0 if k == 1 else 1)
            if accept is not None and not accept(u):
                continue
        except ConeViolationError:
            continue
        out.append(u)
    return out


def quermass_margin(geom: GeometryDescriptor, u, k: int, l: int) -> float:
    """``c F_l^{1/l} - F_k^{1/k}`` with the sharp constant ``c``; nonnegative in theory."""
    snap = snapshot(geom, derivatives(geom, u), k, l)
    c = quermass_constant(geom.n, k, l)
    return c * snap.F_k[l] ** (1.0 / l) - snap.F_k[k] ** (1.0 / k)


def moser_trudinger_margin(geom: GeometryDescriptor, u) -> float:
    """``n E(g) - C (log vol(g) - log vol(g0))`` for ``l = 0``; nonnegative in theory."""
    n = geom.n
    vol = float(np.dot(geom.base_weights, np.exp(-n * np.asarray(u))))
    vol0 = float(geom.base_weights.sum())
    return n * energy_n_half(geom, u) - moser_trudinger_constant(n) * (math.log(vol) - math.log(vol0))


def sobolev_margins_glued(n: int, k: int, l: int, deltas, eps0: float, neck_epsilon: float = 0.1):
    """``Y(g_delta)^{1/(n-2k)} - C_S`` for glued metrics on the sphere, one per delta."""
    base = round_sphere_chart()
    neck = build_neck(neck_epsilon, base, n, k)
    target = sobolev_constant(n, k, l)
    out = {}
    for d in deltas:
        q = glue_and_quotient(base, BubbleProfile(d, eps0), neck, k, l)
        out[d] = q ** (1.0 / (n - 2 * k)) - target
    return out


def symfun_suite(rng: np.random.Generator, samples: int) -> dict:
    """Minimum relative Newton-MacLaurin and Garding gaps and the ellipticity ratio excess."""
    res = {}
    for n in (4, 5):
        for k in (2, 3):
            lam = symfun.sample_cone(rng, n, k, samples)
            s = symfun.elementary_symmetric(lam)
            for l in range(1, k):
                gap = symfun.newton_maclaurin_gap(lam, k, l)
                scale = l * (n - k + 1) * np.abs(s[:, l] * s[:, k - 1])
                res[f"newton_maclaurin.n{n}.k{k}.l{l}"] = float(np.min(gap / scale))
            ref = symfun.sample_cone(rng, n, k, samples)
            for l in range(0, k):
                res[f"garding.n{n}.k{k}.l{l}"] = float(np.min(symfun.garding_gap(lam, ref, k, l)))
    lam = symfun.sample_cone(rng, 5, 2, samples)
    lam = lam[lam.max(axis=1) > 0]
    ratio, alpha0 = symfun.ellipticity_ratio_bound(lam, 2, 0)
    res["ellipticity.n5.k2.l0"] = float(np.min(ratio) - alpha0)
    return res


@dataclass
class VerifyReport:
    """Minimum margins per inequality, failures and their witness fields."""

    margins: dict = dc_field(default_factory=dict)
    violations: list = dc_field(default_factory=list)
    witnesses: dict = dc_field(default_factory=dict)


def run_verify(seed: int, samples: int = 100, grid: int = 256, tolerance: float = 1e-8,
               mt_tolerance: float = 1e-6, symfun_samples: int = 2000,
               deltas=(0.1, 0.05, 0.025), eps0: float = 0.6) -> VerifyReport:
    rng = np.random.default_rng(seed)
    rep = VerifyReport()

    def record(name, margin, tol, witness=None):
        rep.margins[name] = margin
        if margin < -tol:
            rep.violations.append(name)
            if witness is not None:
                rep.witnesses[name] = witness

    for name, val in symfun_suite(rng, symfun_samples).items():
        record(f"symfun.{name}", val, 1e-12)
    geom = GeometryDescriptor(Kind.ROUND_SPHERE, 4, grid)
    zero = np.zeros(grid)
    for k in (2, 3):
        record(f"quermass.k{k}.l1.round", quermass_margin(geom, zero, k, 1), tolerance)
        worst, arg = math.inf, None
        for u in admissible_fields(geom, rng, k, samples):
            m = quermass_margin(geom, u, k, 1)
            if m < worst:
                worst, arg = m, u
        record(f"quermass.k{k}.l1.random", worst, tolerance, arg)
    record("moser_trudinger.round", moser_trudinger_margin(geom, zero), tolerance)

    def path_ok(u):
        try:
            energy_n_half(geom, u)
            return True
        except ConeViolationError:
            return False

    worst, arg = math.inf, None
    for u in admissible_fields(geom, rng, 2, samples, accept=path_ok):
        m = moser_trudinger_margin(geom, u)
        if m < worst:
            worst, arg = m, u
    record("moser_trudinger.random", worst, mt_tolerance, arg)
    try:
        margins = sobolev_margins_glued(5, 2, 1, deltas, eps0)
        record("sobolev.glued", min(margins.values()), tolerance)
    except GluingFailureError as exc:
        rep.margins["sobolev.glued"] = math.nan
        rep.violations.append(f"sobolev.glued ({exc})")
    return rep
