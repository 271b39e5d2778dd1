import math

import numpy as np
import pytest
from scipy.linalg import expm

from nhberry.dynamics import (
    Compensation,
    DriveSpec,
    delta_relation,
    evolve,
    expectation_energy,
    fidelity,
    perturbative_deltaE_check,
    phase_decompose,
    project_coefficients,
    sweep,
    theory_phases,
)
from nhberry.errors import AdiabaticityBroken, ConfigInvalid, StepUnstable
from nhberry.model import ModelConfig, eigen_system, hamiltonian


def fast(z0=1.0, omega=0.02 * np.pi, **kw):
    args = dict(z=0.5, r=1.0, omega=omega, z0=z0, dt=1e-3 / omega)
    args.update(kw)
    return DriveSpec(**args)


def test_spec_validation():
    with pytest.raises(ConfigInvalid):
        DriveSpec(z=-0.5, r=1, omega=0.01)
    with pytest.raises(ConfigInvalid):
        DriveSpec(z=0.5, r=1, omega=0.01, band=-1)
    with pytest.raises(ConfigInvalid):
        DriveSpec(z=0.5, r=0, omega=0.01)
    with pytest.raises(ConfigInvalid):
        DriveSpec(z=0.5, r=1, omega=1.0, dt=0.01)
    DriveSpec(z=-0.5, r=1, omega=0.01, band=-1)
    assert DriveSpec(z=0.5, r=1, omega=0.5).period == pytest.approx(4 * np.pi)


def test_compensation_aliases():
    assert Compensation.coerce("ee") is Compensation.ExpectationEnergy
    assert Compensation.coerce("IE") is Compensation.InstantaneousEigenvalue
    assert Compensation.coerce("none") is Compensation.None_
    with pytest.raises(ConfigInvalid):
        Compensation.coerce("sometimes")


def test_uncompensated_total_phase_matches_closed_form():
    # rotating-frame exact solution for a full orbit
    spec = fast(z0=0.3, omega=0.05 * np.pi, compensation="None")
    tr = evolve(spec)
    d = 0.5 + 0.3j
    H0 = np.array([[d, 1.0], [1.0, -d]])
    T = spec.period
    Heff = H0 - 0.5 * spec.omega * np.diag([1.0, -1.0])
    U = np.diag([np.exp(-0.5j * spec.omega * T), np.exp(0.5j * spec.omega * T)])
    psiT = U @ expm(-1j * Heff * T) @ tr.initial_state
    assert np.linalg.norm(tr.final_state - psiT) < 1e-8 * np.linalg.norm(psiT)
    dec = phase_decompose(tr, theory=False)
    ov = np.vdot(tr.initial_state, psiT)
    assert math.remainder(dec.phi_total.real - np.angle(ov), 2 * np.pi) == pytest.approx(0, abs=1e-8)
    assert dec.phi_total.imag == pytest.approx(-math.log(np.linalg.norm(psiT)), abs=1e-8)


def test_total_phase_independent_of_compensation():
    a = phase_decompose(evolve(fast(compensation="EE")), theory=False).phi_total
    b = phase_decompose(evolve(fast(compensation="IE")), theory=False).phi_total
    c = phase_decompose(evolve(fast(compensation="None")), theory=False).phi_total
    assert abs(a - b) < 1e-8 and abs(a - c) < 1e-8


def test_period_composition():
    one = phase_decompose(evolve(fast())).phi_g
    two = phase_decompose(evolve(fast(n_periods=2))).phi_g
    assert abs(two - 2 * one) < 1e-2


def test_hermitian_berry_phase_first_order_convergence():
    exact = -np.pi * (1 - 0.5 / math.sqrt(1.25))
    errs = []
    for om in (0.02 * np.pi, 0.01 * np.pi, 0.005 * np.pi):
        dec = phase_decompose(evolve(fast(z0=0.0, omega=om)))
        assert dec.phi_g_theory_rr.real == pytest.approx(exact, abs=1e-8)
        assert abs(dec.phi_g.imag) < 1e-4
        errs.append(abs(dec.phi_g - exact))
    # non-adiabatic deviation is linear in the driving rate
    assert 1.8 < errs[0] / errs[1] < 2.2
    assert 1.8 < errs[1] / errs[2] < 2.2


def test_non_hermitian_phases_approach_loop_integrals():
    devs = []
    for om in (0.02 * np.pi, 0.01 * np.pi):
        dec = phase_decompose(evolve(fast(omega=om)))
        devs.append((abs(dec.phi_g - dec.phi_g_theory_rr),
                     abs(dec.phi_g_tilde - dec.phi_g_theory_tilde)))
    for k in range(2):
        assert devs[1][k] < 0.6 * devs[0][k]
    assert max(devs[1]) < 0.03


def test_delta_bookkeeping():
    tr = evolve(fast())
    dec = phase_decompose(tr)
    assert abs(dec.delta_phi_d - dec.int_delta_E) < 1e-12
    rel = delta_relation(tr)
    assert rel.delta_phi_g == pytest.approx(dec.delta_phi_g)
    assert set(rel.residuals) == {"d_minus_g", "d_minus_int", "g_minus_int"}
    # theory delta equals raw TildeRR - RR loop integrals
    rr, tilde = theory_phases(tr.spec)
    assert dec.delta_phi_g == pytest.approx(tilde - rr)


def test_multiple_periods_scale_theory():
    one = theory_phases(fast())
    two = theory_phases(fast(n_periods=2))
    assert two[0] == pytest.approx(2 * one[0]) and two[1] == pytest.approx(2 * one[1])


def test_trace_diagnostics():
    tr = evolve(fast(), record_stride=10)
    assert tr.times[0] == 0 and tr.times[-1] == pytest.approx(tr.spec.period)
    assert np.all(np.diff(tr.times) > 0)
    assert tr.fidelity[0] == pytest.approx(1.0)
    assert tr.min_fidelity > 0.99
    es = eigen_system((1.0, 0.0, 0.5), ModelConfig(1.0))
    assert tr.energy_eigen[0] == pytest.approx(es.e_plus)
    H = hamiltonian((1.0, 0.0, 0.5), ModelConfig(1.0))
    assert tr.energy_expect[0] == pytest.approx(expectation_energy(tr.states[0], H))
    assert fidelity(tr.states[0], es, 1) == pytest.approx(1.0)


def test_adiabaticity_guard():
    spec = DriveSpec(z=0.5, r=1.0, omega=0.8, z0=1.0, dt=1e-3)
    with pytest.raises(AdiabaticityBroken):
        evolve(spec)
    tr = evolve(spec, check_adiabatic=False)
    assert tr.min_fidelity < 0.99


def test_overflow_guard():
    spec = fast(compensation="None", overflow=1e3, n_periods=3)
    with pytest.raises(StepUnstable):
        evolve(spec)


def test_projection_coefficients():
    tr = evolve(fast(omega=0.01 * np.pi), record_stride=100)
    co = project_coefficients(tr)
    assert co.c1[0] == pytest.approx(1.0, abs=1e-12)
    assert abs(co.c02[0]) < 1e-12
    # the band coefficient stays near one in magnitude; the admixture is small
    assert np.abs(np.abs(co.c1) - 1).max() < 0.05
    assert np.nanmax(np.abs(co.c02)) < 0.05
    # log_c2 and c2 agree where c2 is finite
    ok = np.isfinite(co.c2)
    np.testing.assert_allclose(np.exp(co.log_c2[ok][1:]), co.c2[ok][1:], rtol=1e-12)


def test_perturbative_check_fast_run():
    tr = evolve(fast(omega=0.005 * np.pi), record_stride=50)
    chk = perturbative_deltaE_check(tr, project_coefficients(tr))
    assert chk.n_used > 100
    assert chk.median < 0.05


def test_sweep_rows_ordered_and_parallel_consistent():
    base = fast()
    vals = [0.5, 1.0, 1.5]
    a = sweep("radius", base, vals)
    b = sweep("radius", base, vals, jobs=2)
    assert [r.value for r in a] == vals == [r.value for r in b]
    for x, y in zip(a, b):
        assert x.result.phi_g == y.result.phi_g


def test_sweep_reports_failed_rows():
    base = fast()
    rows = sweep("omega", base, [0.02 * np.pi, 5.0])
    assert rows[0].result is not None
    assert rows[1].result is None and "ConfigInvalid" in rows[1].error
    with pytest.raises(ValueError):
        sweep("height", base, [1.0])


def test_pure_python_kernel_path_agrees():
    from nhberry import _kernels

    spec = fast(omega=0.2)
    a = evolve(spec, kernel=_kernels.drive_py)
    b = evolve(spec)
    assert np.allclose(a.final_state, b.final_state, rtol=1e-12)
    assert not a.compiled


@pytest.mark.slow
def test_reference_orbit():
    tr = evolve(DriveSpec(z=0.5, r=1.0, omega=0.0005 * np.pi, z0=1.0))
    dec = phase_decompose(tr)
    assert abs(dec.phi_g - dec.phi_g_theory_rr) < 5e-3
    assert abs(dec.phi_g_tilde - dec.phi_g_theory_tilde) < 5e-3
    assert abs(dec.delta_phi_d - dec.int_delta_E) < 1e-9
