"""Normalised sigma_k / sigma_l conformal flow on the compact 1D reductions.

The scalar form integrated here is::

    2 du/dt = log sigma_k(W) - log sigma_l(W) + 2(k - l) u - log r_kl

with ``W`` the Schouten-type matrix of :mod:`geometry` and ``r_kl`` the
sigma_l-weighted exponential mean of sigma_k(g) / sigma_l(g).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import comb

from . import _kernels as K
from . import symfun
from .errors import ConeViolationError, DomainError, FlowStallError, FlowTimeoutError
from .functionals import energy_n_half, snapshot
from .geometry import (ConformalField, GeometryDescriptor, Kind, derivatives,
                       metric_hessian, schouten_eigenvalues)

TRACE_COLUMNS = ("t", "dt", "vol", "int_sigma_l", "tilde_F_k", "F_k", "r_kl",
                 "residual", "cone_margin", "max_grad_u")


@dataclass(frozen=True)
class FlowConfig:
    k: int
    l: int
    cfl: float = 1.0
    tol_residual: float = 1e-6
    max_time: float = 100.0
    conservation_check_every: int = 1000
    dt_min: float = 1e-12
    residual_floor: float = 1e-11
    chunk_steps: int = 20000

    def __post_init__(self):
        if not 0 <= self.l < self.k:
            raise DomainError(f"need 0 <= l < k, got k={self.k}, l={self.l}")
        if not 0 < self.cfl <= 1:
            raise DomainError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.tol_residual > 0:
            raise DomainError("tol_residual must be positive")
        if not self.max_time > 0:
            raise DomainError("max_time must be positive")
        if self.conservation_check_every < 1:
            raise DomainError("conservation_check_every must be >= 1")


@dataclass(frozen=True)
class FlowState:
    """One accepted state together with its cached diagnostics."""

    geom: GeometryDescriptor
    field: ConformalField
    t: float
    dt: float
    cone_margin: float
    residual: float
    log_r: float
    int_sigma_l: float
    int_sigma_k: float
    vol: float
    dissipation: float
    max_grad_u: float
    min_log_ratio: float
    max_trace: float

    @property
    def r_kl(self) -> float:
        return math.exp(self.log_r)


@dataclass
class FunctionalTrace:
    """Time series of global quantities, one row per recorded state."""

    columns: tuple = TRACE_COLUMNS
    rows: list = dc_field(default_factory=list)
    summary: dict = dc_field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def __len__(self):
        return len(self.rows)


def _require_compact(geom: GeometryDescriptor):
    if not geom.compact:
        raise DomainError("flow runs need a compact geometry (round sphere or product)")


def _kernel_args(geom: GeometryDescriptor, k: int, l: int):
    _require_compact(geom)
    n = geom.n
    if not 0 <= l < k <= n:
        raise DomainError(f"need 0 <= l < k <= n, got n={n}, k={k}, l={l}")
    kind = K.SPHERE if geom.kind is Kind.ROUND_SPHERE else K.PERIODIC
    s_rad, s_tan = geom.background_eigenvalues()
    binom = np.array([comb(n - 1, i, exact=True) for i in range(n + 1)], dtype=float)
    return (kind, n, k, l, geom.step, np.ascontiguousarray(geom.cot),
            np.ascontiguousarray(geom.base_weights), s_rad, s_tan, binom, symfun.CONE_FLOOR)


def _state_from_diag(geom, u, t, dt, diag) -> FlowState:
    return FlowState(
        geom=geom, field=derivatives(geom, u), t=t, dt=dt,
        cone_margin=float(diag[K.MARGIN]), residual=float(diag[K.RESIDUAL]),
        log_r=float(diag[K.LOG_R]), int_sigma_l=float(diag[K.INT_L]),
        int_sigma_k=float(diag[K.INT_K]), vol=float(diag[K.VOL]),
        dissipation=float(diag[K.DISSIPATION]), max_grad_u=float(diag[K.MAX_GRAD]),
        min_log_ratio=float(diag[K.MIN_LOG_RATIO]), max_trace=float(diag[K.MAX_TRACE]))


def initial_state(geom: GeometryDescriptor, u0, k: int, l: int) -> FlowState:
    """Evaluate ``u0`` and wrap it as a state at ``t = 0``.

    Raises :class:`ConeViolationError` if ``u0`` is not admissible.
    """
    args = _kernel_args(geom, k, l)
    u = np.array(u0, dtype=float)
    if u.shape != (geom.grid_size,):
        raise DomainError(f"expected {geom.grid_size} node values, got {u.shape}")
    rhs_, f, diag = np.empty_like(u), np.empty_like(u), np.empty(K.N_DIAG)
    if not K.evaluate(u, *args, rhs_, f, diag):
        node = int(diag[K.BAD_NODE])
        raise ConeViolationError(
            f"initial data leaves Gamma_{k}^+ at node {node}", node=node,
            margin=float(diag[K.MARGIN]), k=k)
    return _state_from_diag(geom, u, 0.0, 0.0, diag)


def log_ratio(geom: GeometryDescriptor, field: ConformalField, k: int, l: int) -> np.ndarray:
    """``log sigma_k(g) - log sigma_l(g)`` per node (reference numpy path)."""
    spec = schouten_eigenvalues(geom, field)
    s = symfun.elementary_symmetric(spec.eigenvalues)
    return np.log(s[:, k]) - np.log(s[:, l]) + 2 * (k - l) * field.u


def rhs(geom: GeometryDescriptor, field: ConformalField, k: int, l: int) -> np.ndarray:
    """``du/dt`` of the flow (reference numpy path).

    A node where sigma_k/sigma_l(g) exceeds ``r_kl`` gets ``du/dt > 0``, which
    shrinks ``g = exp(-2u) g0`` there.
    """
    snap = snapshot(geom, field, k, l)
    return 0.5 * (log_ratio(geom, field, k, l) - math.log(snap.r_kl))


def rhs_conformal_form(geom: GeometryDescriptor, field: ConformalField, k: int, l: int) -> np.ndarray:
    """Same as :func:`rhs` but built from the curvatures of ``g`` itself."""
    snap = snapshot(geom, field, k, l)
    spec = schouten_eigenvalues(geom, field)
    sk = spec.conformal_sigma_k(k)
    sl = spec.conformal_sigma_k(l)
    return 0.5 * (np.log(sk) - np.log(sl) - math.log(snap.r_kl))


def _advance(state: FlowState, cfg: FlowConfig, max_steps: int, t_max: float):
    args = _kernel_args(state.geom, cfg.k, cfg.l)
    u = np.array(state.field.u, dtype=float)
    records = np.empty((max_steps, K.N_DIAG + 2))
    out = K.advance(u, state.t, state.dt, *args, cfg.cfl, cfg.tol_residual, t_max,
                    max_steps, cfg.dt_min, cfg.residual_floor, records)
    return u, records, out


def step(state: FlowState, cfg: FlowConfig) -> FlowState:
    """One adaptive RK4 step (always taken, even when already converged)."""
    once = dataclasses.replace(cfg, tol_residual=1e-300)
    u, records, (n_acc, t, status, bad, dt_next) = _advance(state, once, 1, math.inf)
    if status == 4:
        raise ConeViolationError("state is not admissible", node=bad, k=cfg.k)
    if n_acc == 0:
        raise FlowStallError(f"step size fell below {cfg.dt_min:g}; worst node {bad}",
                             state=state, node=bad)
    row = records[0]
    return _state_from_diag(state.geom, u, float(row[K.N_DIAG]), float(row[K.N_DIAG + 1]), row)


def tilde_F(state: FlowState, k: int) -> float:
    """Signed ``int sigma_k / (n - 2k)``, or the path energy when ``2k = n``."""
    n = state.geom.n
    if 2 * k == n:
        return energy_n_half(state.geom, state.field.u)
    return state.int_sigma_k / (n - 2 * k)


def _trace_row(state: FlowState, cfg: FlowConfig):
    n = state.geom.n
    tF = tilde_F(state, cfg.k)
    F = state.vol ** (-(n - 2 * cfg.k) / n) * state.int_sigma_k
    return (state.t, state.dt, state.vol, state.int_sigma_l, tF, F, state.r_kl,
            state.residual, state.cone_margin, state.max_grad_u)


def run(geom: GeometryDescriptor, u0, cfg: FlowConfig):
    """Integrate until the log-ratio residual drops below ``cfg.tol_residual``.

    Returns ``(final_state, trace)``. The trace keeps a row every
    ``cfg.conservation_check_every`` accepted steps plus the first and last
    state; every accepted step still enters the summary statistics in
    ``trace.summary``. Raises :class:`FlowStallError` or
    :class:`FlowTimeoutError` (both carrying the partial trace).
    """
    n, k, l = geom.n, cfg.k, cfg.l
    state = initial_state(geom, u0, k, l)
    trace = FunctionalTrace()
    trace.rows.append(_trace_row(state, cfg))
    conserved0 = state.int_sigma_l if 2 * l != n else energy_n_half(geom, state.field.u)
    stats = dict(steps=0, max_tilde_F_increase=0.0, max_dissipation_residual=0.0,
                 monotone_violations=0, unexplained_increases=0,
                 max_quotient_increase=0.0, max_step_drift=0.0,
                 min_ratio=math.exp(state.min_log_ratio), max_grad_u=state.max_grad_u,
                 min_cone_margin=state.cone_margin)
    sign_k = 1.0 / (n - 2 * k) if 2 * k != n else math.nan
    prev_tF = state.int_sigma_k * sign_k
    prev_D = state.dissipation
    prev_Q = _quotient(state.int_sigma_k, state.int_sigma_l, n, k, l)
    prev_L = state.int_sigma_l
    every = cfg.conservation_check_every
    since_row = 0
    status = 1 if state.residual < cfg.tol_residual else 0
    while status == 0:
        u, rec, (n_acc, t, status, bad, dt_next) = _advance(
            state, cfg, cfg.chunk_steps, cfg.max_time)
        if n_acc:
            r = rec[:n_acc]
            dt = r[:, K.N_DIAG + 1]
            tF = r[:, K.INT_K] * sign_k
            D = r[:, K.DISSIPATION]
            dF = np.diff(np.concatenate([[prev_tF], tF]))
            Dprev = np.concatenate([[prev_D], D[:-1]])
            dres = np.abs(dF / dt - 0.5 * (Dprev + D))
            Q = _quotient(r[:, K.INT_K], r[:, K.INT_L], n, k, l)
            dQ = np.diff(np.concatenate([[prev_Q], Q]))
            L = r[:, K.INT_L]
            dL = np.abs(np.diff(np.concatenate([[prev_L], L]))) / L
            if 2 * k != n:
                stats["max_tilde_F_increase"] = max(stats["max_tilde_F_increase"], float(dF.max()))
                stats["max_dissipation_residual"] = max(stats["max_dissipation_residual"],
                                                        float(dres.max()))
                roundoff = 1e-12 * np.abs(tF)
                stats["monotone_violations"] += int(np.sum(dF > roundoff))
                stats["unexplained_increases"] += int(np.sum(dF > dt * dres + roundoff))
            stats["max_quotient_increase"] = max(stats["max_quotient_increase"], float(dQ.max()))
            stats["max_step_drift"] = max(stats["max_step_drift"], float(dL.max()))
            stats["min_ratio"] = min(stats["min_ratio"], float(np.exp(r[:, K.MIN_LOG_RATIO].min())))
            stats["max_grad_u"] = max(stats["max_grad_u"], float(r[:, K.MAX_GRAD].max()))
            stats["min_cone_margin"] = min(stats["min_cone_margin"], float(r[:, K.MARGIN].min()))
            stats["steps"] += n_acc
            prev_tF, prev_D, prev_Q, prev_L = tF[-1], D[-1], Q[-1], L[-1]
            idx = np.arange(n_acc)
            for i in idx[(since_row + idx + 1) % every == 0]:
                trace.rows.append(_row_from_record(r[i], geom, cfg))
            since_row = (since_row + n_acc) % every
            last = r[-1]
            state = _state_from_diag(geom, u, float(last[K.N_DIAG]), float(last[K.N_DIAG + 1]), last)
    if trace.rows[-1][0] != state.t or 2 * k == n:
        if trace.rows[-1][0] == state.t:
            trace.rows.pop()
        trace.rows.append(_trace_row(state, cfg))
    conserved1 = state.int_sigma_l if 2 * l != n else energy_n_half(geom, state.field.u)
    stats["conserved_drift"] = abs(conserved1 - conserved0) / abs(conserved0)
    stats["final_residual"] = state.residual
    stats["final_time"] = state.t
    stats["r_kl"] = state.r_kl
    trace.summary = stats
    if status == 2:
        raise FlowStallError(
            f"step size fell below {cfg.dt_min:g} at t={state.t:.6g}; worst node {bad}",
            state=state, trace=trace, node=bad)
    if status == 3:
        raise FlowTimeoutError(
            f"max_time {cfg.max_time:g} reached with residual {state.residual:.3e}",
            state=state, trace=trace)
    if status == 4:
        raise ConeViolationError("state left the cone", node=bad, k=k)
    return state, trace


def _row_from_record(row, geom: GeometryDescriptor, cfg: FlowConfig):
    n, k = geom.n, cfg.k
    int_k, vol = row[K.INT_K], row[K.VOL]
    tF = int_k / (n - 2 * k) if 2 * k != n else math.nan
    F = vol ** (-(n - 2 * k) / n) * int_k
    return (row[K.N_DIAG], row[K.N_DIAG + 1], vol, row[K.INT_L], tF, F,
            math.exp(row[K.LOG_R]), row[K.RESIDUAL], row[K.MARGIN], row[K.MAX_GRAD])


def _quotient(int_k, int_l, n, k, l):
    if 2 * k == n or 2 * l == n:
        return np.zeros_like(np.asarray(int_k, dtype=float))
    return int_k * np.asarray(int_l, dtype=float) ** (-(n - 2 * k) / (n - 2 * l))


def _newton_diag(geom, field, k, l):
    spec = schouten_eigenvalues(geom, field)
    lam = spec.eigenvalues
    s = symfun.elementary_symmetric(lam)
    dk = symfun.deleted_sigmas(lam, k - 1)
    dl = symfun.deleted_sigmas(lam, l - 1) if l >= 1 else np.zeros_like(lam)
    return dk / s[:, k, None] - dl / s[:, l, None]


def _evolution_rhs(geom, field, k, l):
    f = log_ratio(geom, field, k, l)
    snap = snapshot(geom, field, k, l)
    T = _newton_diag(geom, field, k, l)
    h_rad, h_tan = metric_hessian(geom, field, f)
    spatial = 0.5 * (T[:, 0] * h_rad + (geom.n - 1) * T[:, 1] * h_tan)
    return f, spatial + (k - l) * (f - math.log(snap.r_kl))


def evolution_identity_residual(prev: FlowState, state: FlowState, k: int, l: int) -> float:
    """Sup-norm defect of the log-ratio evolution identity between two states.

    Compares the difference quotient of ``log sigma_k/sigma_l(g)`` with the
    trapezoidal average of
    ``1/2 tr(T Hess_g log ratio) + (k - l)(log ratio - log r_kl)``.
    """
    geom = state.geom
    dt = state.t - prev.t
    if dt <= 0:
        raise DomainError("states must be in increasing time order")
    f0, R0 = _evolution_rhs(geom, prev.field, k, l)
    f1, R1 = _evolution_rhs(geom, state.field, k, l)
    return float(np.max(np.abs((f1 - f0) / dt - 0.5 * (R0 + R1))))


def dissipation_rate(geom: GeometryDescriptor, field: ConformalField, k: int, l: int) -> float:
    """``-1/2 int (rho - r)(log rho - log r) sigma_l(g) dg`` with ``rho = sigma_k/sigma_l(g)``."""
    snap = snapshot(geom, field, k, l)
    f = log_ratio(geom, field, k, l)
    spec = schouten_eigenvalues(geom, field)
    w = geom.base_weights * np.exp(-geom.n * field.u) * spec.conformal_sigma_k(l)
    lr = math.log(snap.r_kl)
    return float(-0.5 * np.dot(w, (np.exp(f) - snap.r_kl) * (f - lr)))


def dissipation_identity_residual(prev: FlowState, state: FlowState, k: int, l: int) -> float:
    """``|d tilde_F_k / dt - dissipation rate|`` between two states (trapezoidal)."""
    geom = state.geom
    dt = state.t - prev.t
    if dt <= 0:
        raise DomainError("states must be in increasing time order")
    F0 = tilde_F(_recompute(prev, k, l), k)
    F1 = tilde_F(_recompute(state, k, l), k)
    D0 = dissipation_rate(geom, prev.field, k, l)
    D1 = dissipation_rate(geom, state.field, k, l)
    return float(abs((F1 - F0) / dt - 0.5 * (D0 + D1)))


def _recompute(state: FlowState, k: int, l: int) -> FlowState:
    snap = snapshot(state.geom, state.field, k, l)
    return dataclasses.replace(state, int_sigma_k=snap.integral_sigma[k])
