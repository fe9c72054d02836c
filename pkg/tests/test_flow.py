import math

import numpy as np
import pytest

from sigma_flow_lab import flow
from sigma_flow_lab.errors import ConeViolationError, DomainError, FlowTimeoutError
from sigma_flow_lab.flow import FlowConfig
from sigma_flow_lab.functionals import snapshot
from sigma_flow_lab.geometry import GeometryDescriptor, Kind, derivatives, schouten_eigenvalues


def product(N, n=5):
    return GeometryDescriptor(Kind.PRODUCT_CIRCLE_SPHERE, n, N)


def sine(geom, amp=0.1):
    return amp * np.sin(2 * math.pi * geom.nodes / geom.circle_length)


@pytest.fixture(scope="module")
def product_runs():
    out = {}
    for N in (64, 128):
        geom = product(N)
        out[N] = flow.run(geom, sine(geom), FlowConfig(2, 1))
    return out


# --- configuration and admissibility ---------------------------------------

@pytest.mark.parametrize("kwargs", [dict(k=1, l=1), dict(k=2, l=1, cfl=1.5), dict(k=2, l=1, tol_residual=0),
                                    dict(k=2, l=1, max_time=-1), dict(k=2, l=1, conservation_check_every=0)])
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        FlowConfig(**kwargs)


def test_radial_geometry_is_rejected():
    geom = GeometryDescriptor(Kind.RADIAL_EUCLIDEAN, 5, 64)
    with pytest.raises(DomainError):
        flow.initial_state(geom, np.zeros(64), 2, 1)


def test_inadmissible_initial_data_names_node():
    geom = product(64)
    with pytest.raises(ConeViolationError) as info:
        flow.initial_state(geom, sine(geom, 3.0), 2, 1)
    assert 0 <= info.value.node < 64


# --- right-hand side --------------------------------------------------------

def test_rhs_forms_agree():
    geom = product(128)
    fld = derivatives(geom, sine(geom))
    np.testing.assert_allclose(flow.rhs(geom, fld, 2, 1), flow.rhs_conformal_form(geom, fld, 2, 1),
                               atol=1e-13)


@pytest.mark.parametrize("kind,n,k,l", [(Kind.PRODUCT_CIRCLE_SPHERE, 5, 2, 1),
                                        (Kind.ROUND_SPHERE, 5, 2, 1), (Kind.ROUND_SPHERE, 4, 2, 0)])
def test_compiled_state_matches_reference(kind, n, k, l):
    geom = GeometryDescriptor(kind, n, 96)
    u = 0.1 * np.cos(geom.nodes) if kind is Kind.ROUND_SPHERE else sine(geom)
    state = flow.initial_state(geom, u, k, l)
    fld = derivatives(geom, u)
    snap = snapshot(geom, fld, k, l)
    assert state.r_kl == pytest.approx(snap.r_kl, rel=1e-12)
    assert state.int_sigma_l == pytest.approx(snap.integral_sigma[l], rel=1e-12)
    assert state.int_sigma_k == pytest.approx(snap.integral_sigma[k], rel=1e-12)
    assert state.residual == pytest.approx(2 * np.abs(flow.rhs(geom, fld, k, l)).max(), rel=1e-10)
    assert state.dissipation == pytest.approx(flow.dissipation_rate(geom, fld, k, l), rel=1e-10)


def test_constant_ratio_is_stationary():
    geom = product(64)
    state, trace = flow.run(geom, np.full(64, 0.3), FlowConfig(2, 1))
    assert state.t == 0.0 and len(trace) == 1
    np.testing.assert_array_equal(state.field.u, 0.3)


# --- conservation, monotonicity, convergence --------------------------------

def test_run_converges(product_runs):
    state, trace = product_runs[64]
    assert state.residual < 1e-6
    assert trace.summary["final_residual"] == state.residual


def test_conserved_integral_drift_is_spatial(product_runs):
    coarse = product_runs[64][1].summary["conserved_drift"]
    fine = product_runs[128][1].summary["conserved_drift"]
    assert fine < 1e-8
    assert coarse / fine >= 2 ** 3.5


def test_step_size_does_not_drive_drift():
    geom = product(64)
    full = flow.run(geom, sine(geom), FlowConfig(2, 1))[1].summary
    half = flow.run(geom, sine(geom), FlowConfig(2, 1, cfl=0.5))[1].summary
    assert half["conserved_drift"] == pytest.approx(full["conserved_drift"], rel=1e-3)
    assert half["max_step_drift"] < 0.6 * full["max_step_drift"]


def test_energy_non_increasing(product_runs):
    for _, trace in product_runs.values():
        assert trace.summary["monotone_violations"] == 0
        assert trace.summary["unexplained_increases"] == 0
        tF = trace.column("tilde_F_k")
        assert np.all(np.diff(tF) <= 1e-12 * np.abs(tF[1:]))


def test_trace_time_strictly_increasing(product_runs):
    state, trace = product_runs[64]
    t = trace.column("t")
    assert np.all(np.diff(t) > 0)
    assert t[0] == 0.0 and t[-1] == state.t
    assert trace.columns == flow.TRACE_COLUMNS


def test_resolutions_agree_on_limit_ratio(product_runs):
    assert product_runs[64][0].r_kl == pytest.approx(product_runs[128][0].r_kl, rel=1e-4)


def test_limit_solves_quotient_equation(product_runs):
    state, _ = product_runs[128]
    spec = schouten_eigenvalues(state.geom, state.field)
    ratio = spec.conformal_sigma_k(2) / spec.conformal_sigma_k(1)
    assert np.max(np.abs(ratio / state.r_kl - 1)) < 1e-5


def test_sphere_flow_ends_on_round_metric():
    geom = GeometryDescriptor(Kind.ROUND_SPHERE, 5, 128)
    state, _ = flow.run(geom, 0.1 * np.cos(geom.nodes), FlowConfig(2, 1))
    spec = schouten_eigenvalues(geom, state.field)
    # umbilic: the radial and tangential eigenvalues coincide
    assert np.max(np.abs(spec.radial - spec.tangential) / np.abs(spec.tangential)) < 1e-5


def test_timeout_carries_trace():
    geom = product(64)
    with pytest.raises(FlowTimeoutError) as info:
        flow.run(geom, sine(geom), FlowConfig(2, 1, max_time=0.5))
    assert info.value.trace is not None and len(info.value.trace) >= 1
    assert info.value.trace.summary["final_time"] >= 0.5


# --- identities along one step ----------------------------------------------

def _one_step(N):
    geom = product(N)
    s0 = flow.initial_state(geom, sine(geom), 2, 1)
    return s0, flow.step(s0, FlowConfig(2, 1))


def test_evolution_identity_refines():
    coarse = flow.evolution_identity_residual(*_one_step(128), 2, 1)
    fine = flow.evolution_identity_residual(*_one_step(256), 2, 1)
    assert fine < coarse / 4


def test_dissipation_identity_is_small():
    s0, s1 = _one_step(128)
    res = flow.dissipation_identity_residual(s0, s1, 2, 1)
    assert res < 1e-6 * abs(s1.dissipation)


def test_identities_need_time_order():
    s0, s1 = _one_step(64)
    with pytest.raises(DomainError):
        flow.evolution_identity_residual(s1, s0, 2, 1)
