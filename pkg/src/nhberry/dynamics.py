"""Adiabatic driving around horizontal loops and complex phase bookkeeping.

The state obeys i dpsi/dt = H(R(t)) psi on X = r cos(wt), Y = r sin(wt),
Z = z.  Phases are defined by psi(T) = exp(i phi_total) psi(0):

    phi_d        = -int E(t) dt,        E(t) = <psi|H|psi>/<psi|psi>
    phi_d_tilde  = -int E_band(R) dt
    phi_g        = phi_total - phi_d
    phi_g_tilde  = phi_total - phi_d_tilde

and are compared with loop integrals of the RR and TildeRR connections.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    AdiabaticityBroken,
    ConfigInvalid,
    NHBerryError,
    PhaseUnwrapAmbiguous,
    SampleOnSingularity,
    StepUnstable,
    ZeroState,
)
from .geometry import LoopSpec, connection_array, loop_phase, wrap_phase
from .model import EigenSystem, ModelConfig, gauge_vectors, parse_band

__all__ = [
    "Compensation",
    "DriveSpec",
    "EvolutionTrace",
    "PhaseDecomposition",
    "DeltaRelation",
    "ProjectionCoefficients",
    "PerturbativeCheck",
    "SweepRow",
    "evolve",
    "expectation_energy",
    "fidelity",
    "phase_decompose",
    "delta_relation",
    "project_coefficients",
    "perturbative_deltaE_check",
    "theory_phases",
    "sweep",
]


class Compensation(enum.Enum):
    ExpectationEnergy = "ExpectationEnergy"
    InstantaneousEigenvalue = "InstantaneousEigenvalue"
    None_ = "None"

    @classmethod
    def coerce(cls, value) -> "Compensation":
        if isinstance(value, cls):
            return value
        if value is None:
            return cls.None_
        key = str(value).strip().lower()
        aliases = {
            "expectationenergy": cls.ExpectationEnergy, "ee": cls.ExpectationEnergy,
            "expectation": cls.ExpectationEnergy,
            "instantaneouseigenvalue": cls.InstantaneousEigenvalue,
            "ie": cls.InstantaneousEigenvalue, "eigenvalue": cls.InstantaneousEigenvalue,
            "none": cls.None_, "off": cls.None_,
        }
        if key not in aliases:
            raise ConfigInvalid(f"unknown compensation mode {value!r}")
        return aliases[key]

    @property
    def kernel_mode(self) -> int:
        return {
            Compensation.ExpectationEnergy: _kernels.MODE_EXPECTATION,
            Compensation.InstantaneousEigenvalue: _kernels.MODE_EIGENVALUE,
            Compensation.None_: _kernels.MODE_NONE,
        }[self]


@dataclass(frozen=True)
class DriveSpec:
    z: float
    r: float
    omega: float
    n_periods: float = 1.0
    z0: float = 0.0
    band: int = 1
    compensation: Compensation = Compensation.ExpectationEnergy
    dt: float = 2e-3
    fidelity_min: float = 0.99
    overflow: float = 1e150
    max_omega_dt: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "band", parse_band(self.band))
        object.__setattr__(self, "compensation", Compensation.coerce(self.compensation))
        for name in ("z", "r", "omega", "n_periods", "z0", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigInvalid(f"{name} must be finite")
        if not self.omega > 0:
            raise ConfigInvalid("omega must be positive")
        if not self.dt > 0:
            raise ConfigInvalid("dt must be positive")
        if not self.r > 0:
            raise ConfigInvalid("r must be positive")
        if not self.n_periods > 0:
            raise ConfigInvalid("n_periods must be positive")
        if self.omega * self.dt > self.max_omega_dt:
            raise ConfigInvalid(
                f"omega*dt = {self.omega * self.dt:.3g} exceeds {self.max_omega_dt:g}"
            )
        if self.band * self.z <= 0:
            side = "z > 0" if self.band > 0 else "z < 0"
            raise ConfigInvalid(f"band {'+' if self.band > 0 else '-'} is adiabatic only for {side}")
        if not 0 <= self.fidelity_min <= 1:
            raise ConfigInvalid("fidelity_min must lie in [0, 1]")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def model(self, cfg: ModelConfig | None = None) -> ModelConfig:
        tol = cfg.degeneracy_tol if cfg is not None else ModelConfig().degeneracy_tol
        return ModelConfig(z0=self.z0, degeneracy_tol=tol)


@dataclass
class EvolutionTrace:
    times: np.ndarray
    states: np.ndarray
    fidelity: np.ndarray
    energy_expect: np.ndarray
    energy_eigen: np.ndarray
    delta_E: np.ndarray
    comp_integral: complex
    phase_track: np.ndarray
    # running integrals at the recorded times
    comp_running: np.ndarray
    int_energy: np.ndarray
    int_energy_eigen: np.ndarray
    int_delta_E: np.ndarray
    initial_state: np.ndarray
    final_state: np.ndarray
    min_fidelity: float
    dt: float
    n_steps: int
    stride: int
    status: int
    spec: DriveSpec
    compiled: bool = False


@dataclass(frozen=True)
class PhaseDecomposition:
    phi_total: complex
    phi_d: complex
    phi_d_tilde: complex
    phi_g: complex
    phi_g_tilde: complex
    phi_g_theory_rr: complex
    phi_g_theory_tilde: complex
    delta_phi_d: complex
    delta_phi_g: complex
    int_delta_E: complex
    min_fidelity: float = 1.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class DeltaRelation:
    delta_phi_d: complex
    delta_phi_g: complex
    int_delta_E: complex
    residuals: dict


@dataclass
class ProjectionCoefficients:
    """Bi-orthogonal expansion psi = C1 R_n e^{i gamma_n} e^{i phi_n} + C2 (...)_m.

    ``n`` is the driven band and ``m`` the other one.  Coefficients refer to
    the unit-normalised initial eigenvector, so c1(0) = 1.  ``c2`` grows
    like exp(2 int b dt) for non-Hermitian runs and is stored as ``nan``
    where it overflows; ``log_c2`` always holds its logarithm and ``c02`` the
    well-conditioned ratio p_m / p_n of raw projections.
    """

    times: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    log_c2: np.ndarray
    c02: np.ndarray
    gamma: np.ndarray  # (2, n): gamma_n, gamma_m


@dataclass
class PerturbativeCheck:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    rel_residual: np.ndarray
    median: float
    n_used: int


@dataclass
class SweepRow:
    value: float
    result: PhaseDecomposition | None
    error: str | None = None
    min_fidelity: float = float("nan")


# --------------------------------------------------------------------------

def expectation_energy(state, H) -> complex:
    psi = np.asarray(state, dtype=complex)
    nrm = np.vdot(psi, psi).real
    if not nrm > 0:
        raise ZeroState("expectation value of a zero state")
    return complex(np.vdot(psi, np.asarray(H) @ psi) / nrm)


def fidelity(state, eigensystem: EigenSystem, band) -> float:
    psi = np.asarray(state, dtype=complex)
    vec = eigensystem.right(parse_band(band))
    n1, n2 = np.linalg.norm(psi), np.linalg.norm(vec)
    if n1 == 0 or n2 == 0:
        raise ZeroState("fidelity with a zero vector")
    return float(abs(np.vdot(psi, vec)) ** 2 / (n1 * n2) ** 2)


def evolve(spec: DriveSpec, cfg: ModelConfig | None = None, check_adiabatic=True,
           record_stride=None, kernel=None) -> EvolutionTrace:
    """Integrate one drive with per-step compensation.

    The step is shrunk so that an integer number of steps covers
    ``n_periods`` exactly.  ``kernel`` overrides the compiled/pure choice.
    """
    model = spec.model(cfg)
    T = spec.n_periods * spec.period
    n = int(math.ceil(T / spec.dt - 1e-9))
    dt = T / n
    stride = int(record_stride) if record_stride else max(1, math.ceil(n / 4096))
    R0, _, _, a0 = gauge_vectors(spec.r, 0.0, spec.z, spec.z0, spec.band)
    if a0 < model.degeneracy_tol:
        raise SampleOnSingularity("drive starts on the branch disk")
    psi0 = R0 / np.linalg.norm(R0)
    run = kernel or _kernels.drive
    out = run(spec.z, spec.r, spec.omega, spec.z0, spec.band,
              spec.compensation.kernel_mode, dt, n, stride, psi0, spec.overflow)
    if out["status"] == _kernels.STATUS_OVERFLOW:
        raise StepUnstable(
            f"state norm left [0, {spec.overflow:g}) at step {out['fail_step']}; "
            "use a compensation mode for non-Hermitian runs"
        )
    if check_adiabatic and out["min_fidelity"] < spec.fidelity_min:
        raise AdiabaticityBroken(
            f"fidelity fell to {out['min_fidelity']:.4f} < {spec.fidelity_min}"
        )
    ee, eb = out["e_expect"], out["e_band"]
    return EvolutionTrace(
        times=out["times"],
        states=out["states"],
        fidelity=np.clip(out["fidelity"], 0.0, 1.0),
        energy_expect=ee,
        energy_eigen=eb,
        delta_E=eb - ee,
        comp_integral=complex(out["comp"][-1]),
        phase_track=out["track"],
        comp_running=out["comp"],
        int_energy=out["int_e"],
        int_energy_eigen=out["int_eb"],
        int_delta_E=out["int_de"],
        initial_state=psi0,
        final_state=out["final_state"],
        min_fidelity=float(out["min_fidelity"]),
        dt=dt,
        n_steps=n,
        stride=stride,
        status=int(out["status"]),
        spec=spec,
        compiled=run is _kernels.drive and _kernels.COMPILED,
    )


@lru_cache(maxsize=512)
def _theory_raw(kind, band, z, r, z0, tol):
    return loop_phase(kind, band, LoopSpec(z, r), ModelConfig(z0, tol), principal=False)


def theory_phases(spec: DriveSpec, cfg: ModelConfig | None = None):
    """Raw (unwrapped, fixed-gauge) loop integrals of RR and TildeRR times
    the number of periods."""
    model = spec.model(cfg)
    args = (spec.band, spec.z, spec.r, spec.z0, model.degeneracy_tol)
    return (spec.n_periods * _theory_raw("RR", *args),
            spec.n_periods * _theory_raw("TildeRR", *args))


def phase_decompose(trace: EvolutionTrace, spec: DriveSpec | None = None,
                    cfg: ModelConfig | None = None, theory=True) -> PhaseDecomposition:
    """Total, dynamical and geometric phases of a cyclic run.

    The real part of the total phase is arg <psi0|psi(T)> placed on the
    branch nearest the per-step phase track; the imaginary part is
    -log of the norm ratio.  Theory values are principal values.
    """
    spec = spec or trace.spec
    if trace.status == _kernels.STATUS_PHASE_JUMP:
        raise PhaseUnwrapAmbiguous("a per-step phase increment exceeded pi/2")
    psi0, psiT = trace.initial_state, trace.final_state
    track = float(trace.phase_track[-1])
    arg = float(np.angle(np.vdot(psi0, psiT)))
    re = track + (arg - track + np.pi) % (2 * np.pi) - np.pi
    im = -math.log(np.linalg.norm(psiT) / np.linalg.norm(psi0))
    phi_total = complex(re, im) - trace.comp_integral
    phi_d = -complex(trace.int_energy[-1])
    phi_d_tilde = -complex(trace.int_energy_eigen[-1])
    if theory:
        rr, tilde = theory_phases(spec, cfg)
        th_rr, th_tilde, dg = wrap_phase(rr), wrap_phase(tilde), tilde - rr
    else:
        th_rr = th_tilde = dg = complex("nan+nanj")
    return PhaseDecomposition(
        phi_total=phi_total,
        phi_d=phi_d,
        phi_d_tilde=phi_d_tilde,
        phi_g=phi_total - phi_d,
        phi_g_tilde=phi_total - phi_d_tilde,
        phi_g_theory_rr=th_rr,
        phi_g_theory_tilde=th_tilde,
        delta_phi_d=phi_d - phi_d_tilde,
        delta_phi_g=complex(dg),
        int_delta_E=complex(trace.int_delta_E[-1]),
        min_fidelity=trace.min_fidelity,
    )


def delta_relation(trace: EvolutionTrace, spec: DriveSpec | None = None,
                   cfg: ModelConfig | None = None) -> DeltaRelation:
    """Delta phi_d (dynamical integrals), Delta phi_g (loop integrals of
    TildeRR - RR) and int Delta E dt, with pairwise residuals."""
    spec = spec or trace.spec
    dd = -complex(trace.int_energy[-1]) + complex(trace.int_energy_eigen[-1])
    rr, tilde = theory_phases(spec, cfg)
    dg = complex(tilde - rr)
    ie = complex(trace.int_delta_E[-1])
    return DeltaRelation(
        delta_phi_d=dd,
        delta_phi_g=dg,
        int_delta_E=ie,
        residuals={"d_minus_g": dd - dg, "d_minus_int": dd - ie, "g_minus_int": dg - ie},
    )


def _path(trace):
    spec = trace.spec
    wt = spec.omega * trace.times
    X, Y = spec.r * np.cos(wt), spec.r * np.sin(wt)
    Z = np.full_like(X, spec.z)
    P = np.stack([X, Y, Z], -1)
    Rdot = np.stack([-spec.r * spec.omega * np.sin(wt), spec.r * spec.omega * np.cos(wt),
                     np.zeros_like(wt)], -1)
    return P, Rdot


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def project_coefficients(trace: EvolutionTrace, cfg: ModelConfig | None = None
                         ) -> ProjectionCoefficients:
    """Bi-orthogonal projection of the recorded states on the instantaneous
    eigenbasis with dynamical and geometric factors divided out."""
    spec = trace.spec
    model = spec.model(cfg)
    n, m = spec.band, -spec.band
    P, Rdot = _path(trace)
    X, Y, Z = P[:, 0], P[:, 1], P[:, 2]
    Rn, Ln, _, a = gauge_vectors(X, Y, Z, spec.z0, n, model.degeneracy_tol)
    Rm, Lm, _, _ = gauge_vectors(X, Y, Z, spec.z0, m, model.degeneracy_tol)
    if np.any(a < model.degeneracy_tol):
        raise SampleOnSingularity("trace passes through the branch disk")
    psi = trace.states
    pn = np.sum(np.conj(Ln) * psi, -1) / np.sum(np.conj(Ln) * Rn, -1)
    pm = np.sum(np.conj(Lm) * psi, -1) / np.sum(np.conj(Lm) * Rm, -1)
    g_n = _cumtrapz(np.sum(connection_array("LR", n, P, model) * Rdot, -1), trace.times)
    g_m = _cumtrapz(np.sum(connection_array("LR", m, P, model) * Rdot, -1), trace.times)
    # phi_n = -int E_n dt; E_m = -E_n for this model
    phi_n = -trace.int_energy_eigen
    phi_m = trace.int_energy_eigen
    norm0 = np.linalg.norm(Rn[0])
    comp = trace.comp_running
    c1 = pn * norm0 * np.exp(-1j * (comp + g_n + phi_n))
    with np.errstate(divide="ignore"):
        log_c2 = np.log(pm.astype(complex)) + math.log(norm0) - 1j * (comp + g_m + phi_m)
    with np.errstate(over="ignore", invalid="ignore"):
        c2 = np.where(log_c2.real < 700, np.exp(log_c2), complex("nan+nanj"))
    with np.errstate(divide="ignore", invalid="ignore"):
        c02 = pm / pn
    return ProjectionCoefficients(trace.times, c1, c2, log_c2, c02, np.stack([g_n, g_m]))


def perturbative_deltaE_check(trace: EvolutionTrace, coeffs: ProjectionCoefficients,
                              cfg: ModelConfig | None = None, window=0.05,
                              floor=1e-10) -> PerturbativeCheck:
    """First-order estimate of E_band - E from the other-band admixture.

    rhs = (E_n - E_m) <R_n|R_m>/<R_n|R_n> * p_m/p_n, compared with the
    recorded Delta E over the central part of the run.
    """
    spec = trace.spec
    P, _ = _path(trace)
    Rn, _, En, _ = gauge_vectors(P[:, 0], P[:, 1], P[:, 2], spec.z0, spec.band)
    Rm, _, Em, _ = gauge_vectors(P[:, 0], P[:, 1], P[:, 2], spec.z0, -spec.band)
    ratio = np.sum(np.conj(Rn) * Rm, -1) / np.sum(np.conj(Rn) * Rn, -1)
    rhs = (En - Em) * ratio * coeffs.c02
    lhs = trace.delta_E
    t = trace.times
    T = t[-1] - t[0]
    sel = (t >= t[0] + window * T) & (t <= t[-1] - window * T) & (np.abs(lhs) > floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(rhs - lhs) / np.abs(lhs)
    med = float(np.median(rel[sel])) if np.any(sel) else float("nan")
    return PerturbativeCheck(t, lhs, rhs, np.where(sel, rel, np.nan), med, int(sel.sum()))


# --------------------------------------------------------------------------
# sweeps

SWEEP_FIELDS = {"radius": "r", "r": "r", "z0": "z0", "omega": "omega"}


def _sweep_one(args):
    base, key, value, tol, check = args
    try:
        spec = replace(base, **{key: float(value)})
        trace = evolve(spec, ModelConfig(spec.z0, tol), check_adiabatic=check)
        dec = phase_decompose(trace, spec, ModelConfig(spec.z0, tol))
        return SweepRow(float(value), dec, None, trace.min_fidelity)
    except NHBerryError as exc:
        return SweepRow(float(value), None, f"{type(exc).__name__}: {exc}")


def sweep(kind, base: DriveSpec, values, cfg: ModelConfig | None = None, jobs=1,
          check_adiabatic=True, progress=None) -> list:
    """Run ``evolve`` + ``phase_decompose`` for each swept value.

    Failed rows carry the error message instead of a result.  Rows come
    back in input order whatever ``jobs`` is.
    """
    if kind not in SWEEP_FIELDS:
        raise ValueError(f"unknown sweep kind {kind!r}")
    key = SWEEP_FIELDS[kind]
    tol = (cfg or ModelConfig()).degeneracy_tol
    tasks = [(base, key, v, tol, check_adiabatic) for v in values]
    rows = []
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, row in enumerate(pool.map(_sweep_one, tasks)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(tasks), row)
    else:
        for i, task in enumerate(tasks):
            rows.append(_sweep_one(task))
            if progress:
                progress(i + 1, len(tasks), rows[-1])
    return rows
