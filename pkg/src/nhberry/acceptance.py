"""Exit criteria of the package, runnable from the CLI (``nhberry verify``)
and from the test-suite.  Each check returns a :class:`CriterionResult`
with the measured worst case; tolerances are fixed here, not tuned.
"""
from __future__ import annotations

import contextlib
import io
import math
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (
    DriveSpec,
    evolve,
    perturbative_deltaE_check,
    phase_decompose,
    project_coefficients,
    sweep,
)
from .errors import NHBerryError
from .geometry import (
    LoopSpec,
    Sphere,
    connection_array,
    curvature_analytic_array,
    curvature_fd_array,
    disk_charge_map,
    loop_phase,
    surface_flux,
)
from .gpe import GpeConfig, gpe_evolve
from .model import ModelConfig, eigen_system, gauge_vectors, on_degeneracy_ring, scan_string

OMEGA_REF = 0.0005 * np.pi
R_GRID = tuple(0.25 * k for k in range(1, 15))  # 0.25 .. 3.5
Z0_GRID = tuple(0.25 * k for k in range(0, 9))  # 0 .. 2
OMEGA_GRID = tuple(f * np.pi for f in (0.0002, 0.0004, 0.0006, 0.0008, 0.001))
GPE_R_GRID = tuple(np.linspace(0.25, 3.5, 8))


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.title}: {self.detail}"


def _wrap(x: float) -> float:
    return (x + np.pi) % (2 * np.pi) - np.pi


def _cdiff(a: complex, b: complex):
    """Per-component difference with the real part taken modulo 2 pi."""
    d = complex(a) - complex(b)
    return abs(_wrap(d.real)), abs(d.imag)


class Context:
    """Lazily computed runs shared between criteria."""

    def __init__(self, jobs=1, progress=None):
        self.jobs = jobs
        self.progress = progress
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def base(self, **kw):
        args = dict(z=0.5, r=1.0, omega=OMEGA_REF, z0=1.0)
        args.update(kw)
        return DriveSpec(**args)

    def r_sweep(self):
        return self._get("r", lambda: sweep("radius", self.base(), R_GRID, jobs=self.jobs))

    def z0_sweep(self):
        return self._get("z0", lambda: sweep("z0", self.base(), Z0_GRID, jobs=self.jobs))

    def omega_sweep(self):
        return self._get("omega", lambda: sweep("omega", self.base(), OMEGA_GRID, jobs=self.jobs))

    def reference_trace(self):
        return self._get("ref", lambda: evolve(self.base()))


def _rows_ok(rows):
    bad = [f"{r.value:g}: {r.error}" for r in rows if r.result is None]
    return bad


# --------------------------------------------------------------------------

def c1_fig2(ctx: Context) -> CriterionResult:
    rows = ctx.r_sweep()
    bad = _rows_ok(rows)
    worst = {"rr_re": 0.0, "rr_im": 0.0, "tilde_re": 0.0, "tilde_im": 0.0}
    per_r = {}
    for row in rows:
        if row.result is None:
            continue
        d = row.result
        a = _cdiff(d.phi_g, d.phi_g_theory_rr)
        b = _cdiff(d.phi_g_tilde, d.phi_g_theory_tilde)
        per_r[row.value] = max(a + b)
        for k, v in zip(worst, a + b):
            worst[k] = max(worst[k], v)
    tol = 1e-2
    ok = not bad and all(v <= tol for v in worst.values())
    detail = "max |phi_g - RR| = (%.2e, %.2e), max |phi_g~ - TildeRR| = (%.2e, %.2e), tol %g" % (
        worst["rr_re"], worst["rr_im"], worst["tilde_re"], worst["tilde_im"], tol)
    if bad:
        detail += f"; failed rows {bad}"
    return CriterionResult(1, "Radius sweep vs loop integrals", ok, detail,
                           {"worst": worst, "per_r": per_r})


def c2_delta_relation(ctx: Context) -> CriterionResult:
    rows = ctx.z0_sweep() + ctx.r_sweep()
    bad = _rows_ok(rows)
    worst_g = [0.0, 0.0]
    worst_int = [0.0, 0.0]
    herm = 0.0
    failing = []
    for i, row in enumerate(rows):
        if row.result is None:
            continue
        d = row.result
        rg = d.delta_phi_d - d.delta_phi_g
        ri = d.delta_phi_d - d.int_delta_E
        worst_g = [max(worst_g[0], abs(rg.real)), max(worst_g[1], abs(rg.imag))]
        worst_int = [max(worst_int[0], abs(ri.real)), max(worst_int[1], abs(ri.imag))]
        label = ("z0=%g" if i < len(Z0_GRID) else "r=%g") % row.value
        if max(abs(rg.real), abs(rg.imag)) > 1e-3:
            failing.append(label)
        if i < len(Z0_GRID) and row.value == 0:
            herm = max(abs(d.delta_phi_d.real), abs(d.delta_phi_d.imag))
    ok = (not bad and max(worst_g) <= 1e-3 and max(worst_int) <= 1e-6 and herm <= 1e-5)
    detail = ("max |dphi_d - dphi_g| = (%.2e, %.2e) tol 1e-3; max |dphi_d - int dE| = "
              "(%.2e, %.2e) tol 1e-6; Hermitian |dphi_d| = %.2e tol 1e-5") % (
        *worst_g, *worst_int, herm)
    if failing:
        detail += "; rows over 1e-3: " + ", ".join(failing)
    if bad:
        detail += f"; failed rows {bad}"
    return CriterionResult(2, "Delta phi_d = Delta phi_g", ok, detail,
                           {"d_minus_g": worst_g, "d_minus_int": worst_int, "hermitian": herm,
                            "failing": failing})


def c3_rate(ctx: Context) -> CriterionResult:
    rows = ctx.omega_sweep()
    bad = _rows_ok(rows)
    vals = np.array([r.result.delta_phi_d for r in rows if r.result is not None])
    if len(vals) < 2:
        return CriterionResult(3, "Rate invariance", False, f"runs failed: {bad}")
    mag = np.abs(vals).mean()
    spread = max(abs(a - b) for a in vals for b in vals) / mag
    ok = not bad and spread <= 0.01
    return CriterionResult(3, "Rate invariance of Delta phi_d", ok,
                           "spread %.3f%% of |dphi_d| = %.4f, tol 1%%" % (100 * spread, mag),
                           {"spread": spread, "values": vals.tolist()})


def c4_quantization(ctx: Context) -> CriterionResult:
    worst = 0.0
    vals = {}
    for z0 in (0.0, 0.5, 1.0, 2.0):
        cfg = ModelConfig(z0)
        q_rr = surface_flux("RR", 1, Sphere(radius=4.0), cfg, method="fd")
        q_t = surface_flux("TildeRR", 1, Sphere(radius=4.0), cfg, method="fd")
        vals[z0] = (q_rr, q_t)
        worst = max(worst, abs(q_rr.real + 0.5), abs(q_t.real + 0.5), abs(q_t.imag))
    ok = worst <= 1e-3
    return CriterionResult(4, "Charge quantization on spheres", ok,
                           "max deviation from -1/2 (and Im 0) = %.2e, tol 1e-3" % worst,
                           {"charges": vals})


def c5_disk(ctx: Context) -> CriterionResult:
    cfg = ModelConfig(1.0)
    grid = (64 / 31.5, 64, 64)
    tilde = disk_charge_map("TildeRR", 1, cfg, grid)
    rr = disk_charge_map("RR", 1, cfg, grid)
    interior = [c.charge.real for c in tilde.cells if c.r_hi < 1.0]
    edge = [c.charge.real for c in tilde.cells if c.r_lo < 1.0 < c.r_hi]
    checks = {
        "tilde interior > 0": min(interior) > 0,
        "tilde edge ring < 0": max(edge) < 0,
        "|mu_S| > mu_N": abs(tilde.mu_S.real) > tilde.mu_N.real,
        "RR cells <= 1e-4": max(c.charge.real for c in rr.cells) <= 1e-4,
        "tilde total": abs(tilde.total.real + 0.5) <= 2e-2,
        "RR total": abs(rr.total.real + 0.5) <= 2e-2,
    }
    ok = all(checks.values())
    detail = ("TildeRR total %.4f (mu_S %.3f, mu_N %.3f), RR total %.4f, max RR cell %.1e; %s" % (
        tilde.total.real, tilde.mu_S.real, tilde.mu_N.real, rr.total.real,
        max(c.charge.real for c in rr.cells),
        ", ".join(k for k, v in checks.items() if not v) or "all structure checks hold"))
    return CriterionResult(5, "Disk charge structure", ok, detail, {"checks": checks})


def _random_points(rng, n, z0, margin=0.1, box=2.0, rho_min=0.1):
    pts = []
    while len(pts) < n:
        p = rng.uniform(-box, box, size=3)
        rho = math.hypot(p[0], p[1])
        if rho < rho_min:
            continue
        # distance to the closed disk Z = 0, rho <= |z0|
        dist = math.hypot(max(rho - abs(z0), 0.0), p[2])
        if dist < margin:
            continue
        pts.append(p)
    return np.array(pts)


def c6_identities(ctx: Context) -> CriterionResult:
    rng = np.random.default_rng(6)
    worst_lr = 0.0
    n = 1000
    z0s = rng.uniform(0.0, 2.0, size=n)
    for i in range(n):
        cfg = ModelConfig(float(z0s[i]))
        P = _random_points(rng, 1, cfg.z0)
        a = connection_array("LR", 1, P, cfg)
        b = connection_array("TildeRR", 1, P, cfg)
        worst_lr = max(worst_lr, float(np.abs(a - b).max()))
    herm = ModelConfig(0.0)
    P = _random_points(rng, n, 0.0)
    kinds = [connection_array(k, 1, P, herm) for k in ("LR", "TildeRR", "RR")]
    worst_h = max(float(np.abs(kinds[0] - kinds[2]).max()), float(np.abs(kinds[1] - kinds[2]).max()))
    worst_bi = 0.0
    for i in range(n):
        cfg = ModelConfig(float(z0s[i]))
        p = _random_points(rng, 1, cfg.z0)[0]
        es = eigen_system(p, cfg)
        for L, R in ((es.left_plus, es.right_minus), (es.left_minus, es.right_plus)):
            r = abs(np.vdot(L / np.linalg.norm(L), R / np.linalg.norm(R)))
            worst_bi = max(worst_bi, r)
    ok = worst_lr <= 1e-8 and worst_h <= 1e-8 and worst_bi <= 1e-10
    return CriterionResult(6, "Connection identities", ok,
                           "max |A_LR - A~_RR| = %.1e, Hermitian spread = %.1e, "
                           "bi-orthogonality = %.1e" % (worst_lr, worst_h, worst_bi))


def c7_curvature(ctx: Context) -> CriterionResult:
    rng = np.random.default_rng(7)
    worst = {}
    for z0 in (0.5, 1.0, 2.0):
        cfg = ModelConfig(z0)
        P = _random_points(rng, 1000, z0, margin=0.2, rho_min=0.2)
        for kind in ("RR", "TildeRR"):
            fd = curvature_fd_array(kind, 1, P, cfg)
            an = curvature_analytic_array(kind, P, cfg)
            rel = np.linalg.norm(fd - an, axis=1) / np.linalg.norm(an, axis=1)
            worst[f"{kind}@{z0:g}"] = float(rel.max())
    w = max(worst.values())
    return CriterionResult(7, "Curvature vs closed forms", w <= 1e-6,
                           "max relative error %.2e over 6x1000 points, tol 1e-6" % w,
                           {"worst": worst})


def wilson_loop_phase(z, r, z0, n=1 << 14, band=1):
    """Overlap-product Berry phase with eigenvectors from a generic solver.

    Only meaningful for Hermitian loops, where -arg prod <u_k|u_k+1> is the
    gauge-invariant geometric phase.
    """
    theta = 2 * np.pi * np.arange(n) / n
    vecs = []
    for t in theta:
        H = np.array([[z + 1j * z0, r * np.cos(t) - 1j * r * np.sin(t)],
                      [r * np.cos(t) + 1j * r * np.sin(t), -z - 1j * z0]])
        w, v = np.linalg.eig(H)
        k = np.argmax(band * w.real)
        vecs.append(v[:, k] / np.linalg.norm(v[:, k]))
    vecs = np.array(vecs)
    ov = np.sum(np.conj(vecs) * np.roll(vecs, -1, axis=0), axis=1)
    return -float(np.angle(np.prod(ov / np.abs(ov))))


def c8_hermitian_phase(ctx: Context) -> CriterionResult:
    exact = -np.pi * (1 - 0.5 / math.sqrt(1.25))
    val = loop_phase("RR", 1, LoopSpec(0.5, 1.0), ModelConfig(0.0))
    oracle = wilson_loop_phase(0.5, 1.0, 0.0)
    err = max(abs(val - exact), abs(oracle - exact), abs(val - oracle))
    return CriterionResult(8, "Hermitian Berry phase", err <= 1e-6,
                           "loop %.9f, overlap oracle %.9f, exact %.9f (max diff %.1e, tol 1e-6)"
                           % (val.real, oracle, exact, err))


def c9_im_phi_g(ctx: Context) -> CriterionResult:
    rows = ctx.r_sweep()
    bad = _rows_ok(rows)
    w = max((abs(r.result.phi_g.imag) for r in rows if r.result is not None), default=math.inf)
    return CriterionResult(9, "Im phi_g vanishes (expectation-energy mode)", not bad and w <= 1e-2,
                           "max |Im phi_g| = %.2e, tol 1e-2" % w)


def c10_string(ctx: Context) -> CriterionResult:
    cfg = ModelConfig(1.0)
    rep = scan_string(1, cfg, (-2.0, 2.0), 81, 0.01)
    upper = [w for z, w in rep.axis_samples if 0.05 < z <= 2]
    lower = [w for z, w in rep.axis_samples if -2 <= z < -0.05]
    xs = np.linspace(0.0, 2.0, 20001)
    hits = [x for x in xs if on_degeneracy_ring((x, 0.0, 0.0), cfg, 5e-5)]
    radius = float(np.mean(hits)) if hits else math.nan
    ok = all(w != 0 for w in upper) and all(w == 0 for w in lower) and abs(radius - 1) <= 1e-3
    return CriterionResult(10, "String endpoint vs degeneracy ring", ok,
                           "winding upper %s, lower %s, endpoint %.3f, ring radius %.5f" % (
                               sorted(set(upper)), sorted(set(lower)), rep.endpoint_estimate,
                               radius))


def _gpe_run(args):
    r, comp = args
    try:
        tr = gpe_evolve(GpeConfig(r=float(r), compensation=comp))
        return tr.extracted_phase, None
    except NHBerryError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def c11_gpe(ctx: Context) -> CriterionResult:
    tasks = [(r, c) for r in GPE_R_GRID for c in ("ExpectationEnergy", "InstantaneousEigenvalue")]
    if ctx.jobs > 1:
        with ProcessPoolExecutor(max_workers=ctx.jobs) as pool:
            out = list(pool.map(_gpe_run, tasks))
    else:
        out = [_gpe_run(t) for t in tasks]
    cfg = ModelConfig(1.0)
    worst = 0.0
    failing = []
    errors = []
    table = []
    for (r, comp), (val, err) in zip(tasks, out):
        kind = "RR" if comp == "ExpectationEnergy" else "TildeRR"
        th = loop_phase(kind, 1, LoopSpec(0.5, float(r)), cfg)
        if val is None:
            errors.append(f"r={r:.3g} {comp}: {err}")
            continue
        d = max(_cdiff(val, th))
        table.append((r, comp, val, th, d))
        worst = max(worst, d)
        if d > 5e-2:
            failing.append(f"r={r:.3g}/{'EE' if kind == 'RR' else 'IE'}")
    ok = not errors and worst <= 5e-2
    detail = "max component deviation %.3f rad, tol 5e-2" % worst
    if failing:
        detail += "; over tolerance: " + ", ".join(failing)
    if errors:
        detail += "; errors: " + "; ".join(errors)
    return CriterionResult(11, "GPE soliton phases vs loop integrals", ok, detail,
                           {"table": table})


def c12_perturbative(ctx: Context) -> CriterionResult:
    tr = ctx.reference_trace()
    chk = perturbative_deltaE_check(tr, project_coefficients(tr))
    return CriterionResult(12, "First-order Delta E diagnostic", chk.median <= 0.1,
                           "median relative residual %.2e over %d samples, tol 0.1" % (
                               chk.median, chk.n_used))


def c13_hygiene(ctx: Context) -> CriterionResult:
    phis = [phase_decompose(evolve(ctx.base(dt=dt)), theory=False).phi_total
            for dt in (0.04, 0.02, 0.01)]
    ratio = abs(phis[0] - phis[1]) / abs(phis[1] - phis[2])
    ok_rk = abs(ratio - 16) <= 0.3 * 16
    a = gpe_evolve(GpeConfig(n_grid=1024)).extracted_phase
    b = gpe_evolve(GpeConfig(n_grid=2048)).extracted_phase
    dgrid = abs(a - b)
    ok_grid = dgrid <= 1e-6
    from .cli import main

    same = True
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for k in range(2):
            d = Path(tmp) / f"run{k}"
            argv = ["evolve", "--z", "0.5", "--r", "1", "--z0", "1", "--omega", "0.05",
                    "--output-dir", str(d), "--quiet"]
            with contextlib.redirect_stdout(io.StringIO()):
                if main(argv) != 0:
                    same = False
            outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
        same = same and bool(outs[0]) and outs[0] == outs[1]
    ok = ok_rk and ok_grid and same
    return CriterionResult(13, "Numerical hygiene", ok,
                           "dt-halving ratio %.2f (16 +- 30%%), n_grid doubling change %.1e "
                           "(tol 1e-6), byte-identical CSVs: %s" % (ratio, dgrid, same))


CRITERIA = {
    1: c1_fig2,
    2: c2_delta_relation,
    3: c3_rate,
    4: c4_quantization,
    5: c5_disk,
    6: c6_identities,
    7: c7_curvature,
    8: c8_hermitian_phase,
    9: c9_im_phi_g,
    10: c10_string,
    11: c11_gpe,
    12: c12_perturbative,
    13: c13_hygiene,
}


def run_criterion(number: int, ctx: Context) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        res = CRITERIA[number](ctx)
    except NHBerryError as exc:
        res = CriterionResult(number, CRITERIA[number].__name__, False,
                              f"{type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def run_suite(numbers=None, jobs=1, progress=None) -> list:
    ctx = Context(jobs=jobs)
    out = []
    for n in numbers or sorted(CRITERIA):
        res = run_criterion(n, ctx)
        out.append(res)
        if progress:
            progress(res)
    return out
