import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nhberry.errors import SampleOnSingularity, StringProximity, UnsupportedBand
from nhberry.geometry import (
    ConnectionKind,
    LoopSpec,
    Pillbox,
    Sphere,
    connection,
    connection_array,
    curvature_analytic,
    curvature_analytic_array,
    curvature_fd,
    curvature_fd_array,
    disk_charge_map,
    loop_phase,
    surface_flux,
    wrap_phase,
)
from nhberry.model import ModelConfig, gauge_vectors

# --------------------------------------------------------------------------
# symbolic oracle: RR connection and its curl straight from the definitions

_X, _Y, _Z, _z0 = sp.symbols("X Y Z z0", real=True)


def _symbolic_rr():
    E = sp.sqrt(_X**2 + _Y**2 + (_Z + sp.I * _z0) ** 2)
    R = sp.Matrix([_X - sp.I * _Y, -_Z - sp.I * _z0 + E])
    norm = (R.H * R)[0]
    A = [sp.I * (R.H * sp.diff(R, v))[0] / norm for v in (_X, _Y, _Z)]
    B = [sp.diff(A[2], _Y) - sp.diff(A[1], _Z),
         sp.diff(A[0], _Z) - sp.diff(A[2], _X),
         sp.diff(A[1], _X) - sp.diff(A[0], _Y)]
    args = (_X, _Y, _Z, _z0)
    return sp.lambdify(args, A, "numpy"), sp.lambdify(args, B, "numpy")


A_SYM, B_SYM = _symbolic_rr()


def sym_eval(f, p, z0):
    # numpy's principal sqrt matches the branch with Re E >= 0 away from the disk
    return np.array(f(*p, z0), dtype=complex)


def random_regular(rng, n, z0, margin=0.2):
    out = []
    while len(out) < n:
        p = rng.uniform(-2, 2, 3)
        rho = math.hypot(p[0], p[1])
        if rho < margin or abs(p[2]) < margin:
            continue
        out.append(p)
    return np.array(out)


@pytest.mark.parametrize("z0", [0.0, 0.7, 1.5])
def test_rr_connection_matches_symbolic(z0):
    rng = np.random.default_rng(11)
    cfg = ModelConfig(z0)
    P = random_regular(rng, 30, z0)
    A = connection_array("RR", 1, P, cfg)
    for p, a in zip(P, A):
        np.testing.assert_allclose(a, sym_eval(A_SYM, p, z0), atol=1e-8, rtol=1e-7)


@pytest.mark.parametrize("z0", [0.5, 1.0])
def test_rr_closed_form_curvature_matches_symbolic(z0):
    rng = np.random.default_rng(12)
    cfg = ModelConfig(z0)
    P = random_regular(rng, 30, z0)
    B = curvature_analytic_array("RR", P, cfg)
    for p, b in zip(P, B):
        np.testing.assert_allclose(b, sym_eval(B_SYM, p, z0), atol=1e-10, rtol=1e-9)


def test_tilde_curvature_is_monopole_like():
    # B = -(X, Y, Z + i z0) / (2 E^3): divergence-free, radial in complex sense
    cfg = ModelConfig(1.0)
    p = np.array([0.4, -0.9, 0.6])
    E = np.sqrt(p[0] ** 2 + p[1] ** 2 + (p[2] + 1j) ** 2)
    expect = -np.array([p[0], p[1], p[2] + 1j]) / (2 * E**3)
    np.testing.assert_allclose(curvature_analytic("TildeRR", p, cfg).B, expect, atol=1e-14)


@pytest.mark.parametrize("kind", ["RR", "TildeRR", "LR"])
@pytest.mark.parametrize("z0", [0.5, 1.0, 2.0])
def test_fd_curvature_matches_closed_form(kind, z0):
    rng = np.random.default_rng(13)
    cfg = ModelConfig(z0)
    P = random_regular(rng, 40, z0)
    fd = curvature_fd_array(kind, 1, P, cfg)
    an = curvature_analytic_array(kind, P, cfg)
    rel = np.linalg.norm(fd - an, axis=1) / np.linalg.norm(an, axis=1)
    assert rel.max() < 1e-7


def test_curvature_divergence_free():
    cfg = ModelConfig(0.8)
    p = np.array([0.5, 0.3, 0.7])
    h = 1e-4
    for kind in ("RR", "TildeRR"):
        div = 0
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            div += (curvature_analytic_array(kind, (p + e)[None], cfg)[0, j]
                    - curvature_analytic_array(kind, (p - e)[None], cfg)[0, j]) / (2 * h)
        assert abs(div) < 1e-7


def test_connection_identities():
    rng = np.random.default_rng(14)
    cfg = ModelConfig(1.2)
    P = random_regular(rng, 50, 1.2)
    np.testing.assert_allclose(connection_array("LR", 1, P, cfg),
                               connection_array("TildeRR", 1, P, cfg), atol=1e-9)
    herm = ModelConfig(0.0)
    rr = connection_array("RR", 1, P, herm)
    for kind in ("LR", "TildeRR"):
        np.testing.assert_allclose(connection_array(kind, 1, P, herm), rr, atol=1e-9)
    # for an unnormalised R the imaginary part of A_RR is grad log|R|
    h = 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        n = lambda Q: np.linalg.norm(gauge_vectors(*Q.T, 0.0, 1)[0], axis=-1)
        grad = (np.log(n(P + e)) - np.log(n(P - e))) / (2 * h)
        np.testing.assert_allclose(rr[:, j].imag, grad, atol=1e-7)


def test_connection_gauge_covariance():
    # R -> c R shifts A_RR by -grad arg c (for |c| constant) ...
    cfg = ModelConfig(0.9)
    p = np.array([[0.6, 0.2, 0.8]])
    gauge = lambda X, Y, Z: np.exp(1j * (X + 2 * Y))
    a0 = connection_array("RR", 1, p, cfg)
    a1 = connection_array("RR", 1, p, cfg, gauge=gauge)
    np.testing.assert_allclose(a1 - a0, [[-1.0, -2.0, 0.0]], atol=1e-8)
    # ... and leaves the curvature alone, so loop phases agree
    loop = LoopSpec(0.5, 1.0)
    assert abs(loop_phase("RR", 1, loop, cfg, gauge=gauge) - loop_phase("RR", 1, loop, cfg)) < 1e-7


def test_loop_phase_complex_gauge_covariance():
    # a nowhere-zero complex factor single-valued on the loop shifts the real
    # part by a multiple of 2 pi and leaves the imaginary part unchanged
    cfg = ModelConfig(1.0)
    loop = LoopSpec(0.5, 1.0)
    gauge = lambda X, Y, Z: np.exp((0.3 + 0.2j) * X)
    a = loop_phase("RR", 1, loop, cfg, principal=False)
    b = loop_phase("RR", 1, loop, cfg, principal=False, gauge=gauge)
    k = (b.real - a.real) / (2 * np.pi)
    assert abs(k - round(k)) < 1e-7
    assert abs(b.imag - a.imag) < 1e-7


def test_hermitian_loop_phase_solid_angle():
    # -pi (1 - cos theta) for the upper band of a spin-1/2 in a field
    for z, r in [(0.5, 1.0), (1.0, 0.3), (2.0, 2.0)]:
        expect = -np.pi * (1 - z / math.hypot(z, r))
        val = loop_phase("RR", 1, LoopSpec(z, r), ModelConfig(0.0))
        assert abs(val - expect) < 1e-7


@pytest.mark.parametrize("kind", ["RR", "TildeRR"])
def test_loop_phase_matches_direct_quadrature(kind):
    # independent line integral of the symbolic connection (RR) or, for the
    # tilde form, of the package's own point evaluator through scipy.quad
    cfg = ModelConfig(1.0)
    z, r = 0.5, 1.3
    if kind == "RR":
        def f(t, part):
            p = (r * math.cos(t), r * math.sin(t), z)
            A = sym_eval(A_SYM, p, 1.0)
            v = A[0] * -r * math.sin(t) + A[1] * r * math.cos(t)
            return getattr(v, part)
    else:
        def f(t, part):
            A = connection("TildeRR", 1, (r * math.cos(t), r * math.sin(t), z), cfg).A
            v = A[0] * -r * math.sin(t) + A[1] * r * math.cos(t)
            return getattr(v, part)
    re = quad(f, 0, 2 * np.pi, args=("real",), epsabs=1e-11, limit=200)[0]
    im = quad(f, 0, 2 * np.pi, args=("imag",), epsabs=1e-11, limit=200)[0]
    raw = loop_phase(kind, 1, LoopSpec(z, r), cfg, principal=False)
    assert abs(raw - complex(re, im)) < 1e-7
    assert abs(wrap_phase(raw) - loop_phase(kind, 1, LoopSpec(z, r), cfg)) < 1e-12


def test_loop_orientation_flips_sign():
    cfg = ModelConfig(1.0)
    a = loop_phase("TildeRR", 1, LoopSpec(0.5, 1.0), cfg, principal=False)
    b = loop_phase("TildeRR", 1, LoopSpec(0.5, 1.0, orientation="cw"), cfg, principal=False)
    assert abs(a + b) < 1e-12


def test_small_loop_obeys_stokes():
    # phase ~ pi r^2 B_z at the centre, modulo the 2 pi winding of the string
    cfg = ModelConfig(1.0)
    r = 1e-2
    p = np.array([[0.0, 0.0, 0.8]])
    for kind in ("RR", "TildeRR"):
        Bz = curvature_analytic_array(kind, p, cfg)[0, 2]
        val = loop_phase(kind, 1, LoopSpec(0.8, r), cfg, tol=1e-12)
        assert abs(val - np.pi * r * r * Bz) < 1e-4 * abs(np.pi * r * r * Bz)


@given(st.floats(-50, 50, allow_nan=False), st.floats(-5, 5, allow_nan=False))
def test_wrap_phase_properties(re, im):
    w = wrap_phase(complex(re, im))
    assert -np.pi < w.real <= np.pi + 1e-12
    assert w.imag == im
    k = (re - w.real) / (2 * np.pi)
    assert abs(k - round(k)) < 1e-9


def test_wrap_phase_boundary():
    assert wrap_phase(np.pi).real == pytest.approx(np.pi)
    assert wrap_phase(-np.pi).real == pytest.approx(np.pi)


@pytest.mark.parametrize("z0", [0.0, 0.5, 1.0, 2.0])
def test_sphere_charge_quantized(z0):
    cfg = ModelConfig(z0)
    for kind in ("RR", "TildeRR"):
        q = surface_flux(kind, 1, Sphere(radius=4.0), cfg)
        assert abs(q.real + 0.5) < 1e-6
        assert abs(q.imag) < 1e-6


def test_sphere_flux_independent_of_radius():
    cfg = ModelConfig(1.0)
    qs = [surface_flux("TildeRR", 1, Sphere(radius=R), cfg) for R in (1.5, 3.0, 10.0)]
    assert max(abs(q - qs[0]) for q in qs) < 1e-3


def test_sphere_not_enclosing_source_is_empty():
    q = surface_flux("TildeRR", 1, Sphere(center=(0, 0, 3.0), radius=1.0), ModelConfig(1.0))
    assert abs(q) < 1e-8


def test_sphere_crossing_disk_rejected():
    with pytest.raises(SampleOnSingularity):
        surface_flux("RR", 1, Sphere(radius=0.5), ModelConfig(1.0))


def test_minus_band_fd_flux():
    q = surface_flux("RR", -1, Sphere(radius=3.0), ModelConfig(0.5), n_theta=32, n_phi=32)
    assert abs(q.real - 0.5) < 1e-5


def test_analytic_minus_band_unsupported():
    with pytest.raises(UnsupportedBand):
        surface_flux("RR", -1, Sphere(radius=3.0), ModelConfig(0.5), method="analytic")


def test_disk_map_structure_small_grid():
    cfg = ModelConfig(1.0)
    grid = (16 / 7.5, 16, 8)
    tilde = disk_charge_map("TildeRR", 1, cfg, grid)
    rr = disk_charge_map("RR", 1, cfg, grid)
    assert abs(tilde.total + 0.5) < 1e-6
    assert abs(rr.total + 0.5) < 1e-6
    inner = [c.charge.real for c in tilde.cells if c.r_hi < 1]
    ring = [c.charge.real for c in tilde.cells if c.r_lo < 1 < c.r_hi]
    outer = [c.charge for c in tilde.cells if c.r_lo > 1]
    assert min(inner) > 0 and max(ring) < 0
    assert max(abs(q) for q in outer) < 1e-10
    assert abs(tilde.mu_S.real) > tilde.mu_N.real
    assert abs(tilde.mu_S + tilde.mu_N - tilde.total) < 1e-10
    assert max(c.charge.real for c in rr.cells) <= 1e-4


def test_disk_map_hermitian_point_charge():
    rep = disk_charge_map("RR", 1, ModelConfig(0.0), (2.0, 8, 4))
    assert abs(rep.cells[0].charge + 0.5) < 1e-6
    assert abs(rep.total + 0.5) < 1e-6


def test_disk_map_rejects_face_on_ring():
    with pytest.raises(SampleOnSingularity):
        disk_charge_map("RR", 1, ModelConfig(1.0), (2.0, 8, 4))


def test_pillbox_flux_matches_map_cell():
    cfg = ModelConfig(1.0)
    rep = disk_charge_map("TildeRR", 1, cfg, (16 / 7.5, 16, 8))
    c = rep.cells[3]
    q = surface_flux("TildeRR", 1, Pillbox(c.r_lo, c.r_hi, c.phi_lo, c.phi_hi), cfg)
    # separate adaptive partitions: agreement at the quadrature tolerance
    assert abs(q - c.charge) < 1e-4 * abs(c.charge)


def test_charge_report_serialization():
    rep = disk_charge_map("RR", 1, ModelConfig(0.0), (2.0, 4, 4))
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("r_lo,r_hi")
    assert len(lines) == 1 + len(rep.cells)
    assert '"total"' in rep.to_json()


def test_singular_samples_rejected():
    cfg = ModelConfig(1.0)
    with pytest.raises(SampleOnSingularity):
        connection_array("RR", 1, [[0.3, 0.0, 0.0]], cfg)
    with pytest.raises(SampleOnSingularity):
        connection_array("RR", 1, [[0.3, 0.0, 1e-7]], cfg)
    with pytest.raises(SampleOnSingularity):
        LoopSpec(0.0, 0.5, z0=1.0)


def test_string_proximity_rejected():
    # the band + gauge vector vanishes on the positive Z axis
    with pytest.raises(StringProximity):
        connection_array("RR", 1, [[0.0, 0.0, 0.7]], ModelConfig(0.5))


def test_kind_coercion():
    assert ConnectionKind.coerce("tilde_rr") is ConnectionKind.TildeRR
    assert ConnectionKind.coerce("~RR") is ConnectionKind.TildeRR
    assert ConnectionKind.coerce("RR") is ConnectionKind.RR
    with pytest.raises(ValueError):
        ConnectionKind.coerce("XY")


def test_point_wrappers():
    cfg = ModelConfig(1.0)
    p = (0.5, 0.5, 0.5)
    assert np.allclose(connection("RR", 1, p, cfg).A, connection_array("RR", 1, [p], cfg)[0])
    assert np.allclose(curvature_fd("RR", 1, p, cfg).B,
                       curvature_analytic("RR", p, cfg).B, rtol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(0.2, 3.0), st.floats(0.0, 2.0))
def test_delta_loop_equals_raw_tilde_minus_rr(z, r, z0):
    # the imaginary part of the RR loop integral vanishes identically
    cfg = ModelConfig(z0)
    rr = loop_phase("RR", 1, LoopSpec(z, r), cfg, principal=False, tol=1e-7)
    assert abs(rr.imag) < 1e-6
