"""Two-component 1D Gross-Pitaevskii solver with gain/loss and Rabi coupling.

    i d_t psi1 = [-d_x^2/2 + g rho + (Delta + i delta)] psi1 + Omega  psi2
    i d_t psi2 = [-d_x^2/2 + g rho - (Delta + i delta)] psi2 + Omega* psi1

with rho = |psi1|^2 + |psi2|^2 and Omega = Omega1 - i Omega2 =
r exp(-i w t).  The local two-level part H_l is the model Hamiltonian
under Delta -> Z, delta -> z0, (Omega1, Omega2) -> (X, Y).

A bright soliton A sech(x/w) (w = 1/(|A| sqrt|g|)) carrying an
eigen-spinor of H_l is driven once around the loop with a per-step
compensation factor exp(+i E_c dt); the phase left on the soliton peak is
compared with the linear geometric phases.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants
from scipy.fft import fft, ifft, fftfreq

from .errors import ConfigInvalid, SolitonLost, StabilityViolation
from .model import branch, parse_band

__all__ = [
    "GpeCompensation",
    "GpeConfig",
    "FieldPair",
    "GpeTrace",
    "UnitsReport",
    "soliton_initial",
    "local_spinor",
    "local_energy",
    "gpe_step",
    "gpe_evolve",
    "units_report",
]


class GpeCompensation(enum.Enum):
    ExpectationEnergy = "ExpectationEnergy"
    InstantaneousEigenvalue = "InstantaneousEigenvalue"
    None_ = "None"

    @classmethod
    def coerce(cls, value):
        if isinstance(value, cls):
            return value
        key = "none" if value is None else str(value).strip().lower()
        aliases = {
            "expectationenergy": cls.ExpectationEnergy, "ee": cls.ExpectationEnergy,
            "instantaneouseigenvalue": cls.InstantaneousEigenvalue,
            "ie": cls.InstantaneousEigenvalue,
            "none": cls.None_,
        }
        if key not in aliases:
            raise ConfigInvalid(f"unknown compensation mode {value!r}")
        return aliases[key]


ENERGY_FUNCTIONALS = ("peak", "full", "peak_local")


@dataclass(frozen=True)
class GpeConfig:
    """Dimensionless soliton run.

    ``energy_functional`` selects what the compensation energy contains.
    With chi the spinor at the grid centre and G the full operator
    -d_x^2/2 + g rho + H_l:

    ``"peak"``        <chi|(G psi)(0)> / <chi|chi>   (default)
    ``"full"``        <psi|G psi> / <psi|psi> over the whole grid
    ``"peak_local"``  <chi|(H_l + g rho(0)) chi> / <chi|chi>

    In eigenvalue mode the scalar part of the same functional (everything
    except H_l) is added to E_l.  ``"peak"`` makes the centre spinor obey the
    compensated two-level equation exactly, including the soliton chemical
    potential and dispersion at the peak.
    """

    n_grid: int = 2048
    domain_length: float | None = None  # default 32 w
    dt: float = 5e-3
    g: float = -3.6e-6
    delta: float = 0.5
    delta0: float = 1.0
    amplitude: float = 50.0
    r: float = 1.0
    omega: float = 0.03 * np.pi
    band: int = 1
    compensation: GpeCompensation = GpeCompensation.ExpectationEnergy
    energy_functional: str = "peak"
    n_periods: float = 1.0
    peak_loss: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "band", parse_band(self.band))
        object.__setattr__(self, "compensation", GpeCompensation.coerce(self.compensation))
        n = int(self.n_grid)
        if n < 4 or n & (n - 1):
            raise ConfigInvalid("n_grid must be a power of two")
        if self.g > 0:
            raise ConfigInvalid("g must be <= 0 (attractive, bright soliton)")
        if not self.dt > 0 or not self.omega > 0 or not self.n_periods > 0:
            raise ConfigInvalid("dt, omega and n_periods must be positive")
        if self.r < 0:
            raise ConfigInvalid("r must be >= 0")
        if self.energy_functional not in ENERGY_FUNCTIONALS:
            raise ConfigInvalid(f"energy_functional must be one of {ENERGY_FUNCTIONALS}")
        if self.domain_length is None:
            if self.g == 0:
                raise ConfigInvalid("domain_length is required when g = 0")
            object.__setattr__(self, "domain_length", 32.0 * self.width)
        if not self.domain_length > 0:
            raise ConfigInvalid("domain_length must be positive")
        if self.g != 0 and self.domain_length < 16 * self.width:
            raise ConfigInvalid(
                f"domain_length {self.domain_length:.4g} < 16 w = {16 * self.width:.4g}"
            )

    @property
    def width(self) -> float:
        if self.g == 0 or self.amplitude == 0:
            return math.inf
        return 1.0 / (abs(self.amplitude) * math.sqrt(abs(self.g)))

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    @property
    def k_max(self) -> float:
        return np.pi * self.n_grid / self.domain_length

    def grid(self) -> np.ndarray:
        L, n = self.domain_length, self.n_grid
        return (np.arange(n) - n // 2) * (L / n)

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * fftfreq(self.n_grid, d=self.domain_length / self.n_grid)

    def weak_nonlinearity_ratio(self) -> float:
        """|g| A^2 / |E_l|; small values mean the soliton is a weak perturbation."""
        a, b = branch(self.r, 0.0, self.delta, self.delta0)
        e = math.hypot(float(a), float(b))
        return abs(self.g) * self.amplitude ** 2 / e if e > 0 else math.inf


@dataclass
class FieldPair:
    psi1: np.ndarray
    psi2: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi1 = np.asarray(self.psi1, dtype=complex)
        self.psi2 = np.asarray(self.psi2, dtype=complex)
        if self.psi1.shape != self.psi2.shape or self.psi1.ndim != 1:
            raise ValueError("field components must be 1D arrays of equal length")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi1) ** 2 + np.abs(self.psi2) ** 2

    def copy(self) -> "FieldPair":
        return FieldPair(self.psi1.copy(), self.psi2.copy(), self.t)


@dataclass
class GpeTrace:
    times: np.ndarray
    center_phase: np.ndarray
    norms: np.ndarray
    peak_density: np.ndarray
    extracted_phase: complex
    comp_integral: complex
    dominant: int
    final: FieldPair
    config: GpeConfig
    dt: float
    n_steps: int

    def to_csv(self) -> str:
        lines = ["t,phase_re,phase_im,norm,peak_density"]
        for t, p, n, d in zip(self.times, self.center_phase, self.norms, self.peak_density):
            lines.append(",".join("%.17g" % v for v in (t, p.real, p.imag, n, d)))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# linear part

def _omega(cfg: GpeConfig, t):
    return cfg.r * np.exp(-1j * cfg.omega * t)


def local_spinor(cfg: GpeConfig, t=0.0) -> np.ndarray:
    """Unit eigen-spinor of H_l(t) for ``cfg.band``.

    Uses the column (Omega, -d + E); where that vanishes (r = 0 on the
    nodal side) the other column (E + d, Omega*) is used instead.
    """
    d = complex(cfg.delta, cfg.delta0)
    Om = complex(_omega(cfg, t))
    a, b = branch(cfg.r, 0.0, cfg.delta, cfg.delta0)
    E = cfg.band * complex(float(a), float(b))
    v = np.array([Om, -d + E])
    alt = np.array([E + d, np.conj(Om)])
    if np.linalg.norm(alt) > np.linalg.norm(v):
        v = alt
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ConfigInvalid("linear part is at an exceptional point; no eigen-spinor")
    return v / nrm


def local_energy(cfg: GpeConfig) -> complex:
    """Band eigenvalue E_l of H_l (constant along the loop)."""
    a, b = branch(cfg.r, 0.0, cfg.delta, cfg.delta0)
    return cfg.band * complex(float(a), float(b))


def soliton_initial(cfg: GpeConfig) -> FieldPair:
    x = cfg.grid()
    env = cfg.amplitude / np.cosh(x / cfg.width) if math.isfinite(cfg.width) else \
        np.full_like(x, cfg.amplitude)
    s = local_spinor(cfg, 0.0)
    return FieldPair(s[0] * env, s[1] * env, 0.0)


def _local_propagator(cfg: GpeConfig, t, dt):
    """exp(-i dt H_l(t)) in closed form: cos(E dt) I - i sin(E dt)/E H_l."""
    d = complex(cfg.delta, cfg.delta0)
    Om = complex(_omega(cfg, t))
    E = np.sqrt(d * d + Om * np.conj(Om))
    c = np.cos(E * dt)
    s = np.sin(E * dt) / E if abs(E) > 1e-12 else dt
    return np.array([[c - 1j * s * d, -1j * s * Om],
                     [-1j * s * np.conj(Om), c + 1j * s * d]])


def _check_stability(cfg: GpeConfig, dt):
    if dt * cfg.k_max ** 2 / 2 > np.pi:
        raise StabilityViolation(
            f"dt*k_max^2/2 = {dt * cfg.k_max ** 2 / 2:.3g} exceeds pi; reduce dt or n_grid"
        )


def _energies(cfg: GpeConfig, fields: FieldPair, t, k2):
    """(total, scalar, nonlinear) compensation energies of ``fields`` at t.

    ``scalar`` is the part without H_l, used in eigenvalue mode;
    ``nonlinear`` is its g-term, which scales with |c|^2 when the fields
    are multiplied by c.
    """
    d = complex(cfg.delta, cfg.delta0)
    Om = complex(_omega(cfg, t))
    p1, p2 = fields.psi1, fields.psi2
    j = cfg.n_grid // 2
    if cfg.energy_functional == "full":
        rho = np.abs(p1) ** 2 + np.abs(p2) ** 2
        nrm = rho.sum()
        kin = 0.5 * np.sum(k2 * (np.abs(fft(p1)) ** 2 + np.abs(fft(p2)) ** 2)) / cfg.n_grid
        loc = np.sum(np.conj(p1) * (d * p1 + Om * p2) + np.conj(p2) * (np.conj(Om) * p1 - d * p2))
        nonlin = cfg.g * np.sum(rho * rho) / nrm
        scalar = kin / nrm + nonlin
        return complex(scalar + loc / nrm), complex(scalar), complex(nonlin)
    q1, q2 = p1[j], p2[j]
    rho = abs(q1) ** 2 + abs(q2) ** 2
    if cfg.energy_functional == "peak":
        # spectral -d_x^2/2 evaluated at the centre point only
        phase = np.exp(2j * np.pi * j * np.arange(cfg.n_grid) / cfg.n_grid)
        w = 0.5 * k2 * phase / cfg.n_grid
        kin = (np.conj(q1) * np.sum(w * fft(p1)) + np.conj(q2) * np.sum(w * fft(p2))) / rho
    else:
        kin = 0.0
    nonlin = cfg.g * rho
    scalar = kin + nonlin
    loc = (np.conj(q1) * (d * q1 + Om * q2) + np.conj(q2) * (np.conj(Om) * q1 - d * q2)) / rho
    return complex(scalar + loc), complex(scalar), complex(nonlin)


def _split_step(cfg: GpeConfig, fields: FieldPair, t, dt, kin_half):
    p1 = ifft(fft(fields.psi1) * kin_half)
    p2 = ifft(fft(fields.psi2) * kin_half)
    rho = np.abs(p1) ** 2 + np.abs(p2) ** 2
    U = _local_propagator(cfg, t + 0.5 * dt, dt)
    nl = np.exp(-1j * dt * cfg.g * rho)
    q1 = nl * (U[0, 0] * p1 + U[0, 1] * p2)
    q2 = nl * (U[1, 0] * p1 + U[1, 1] * p2)
    q1 = ifft(fft(q1) * kin_half)
    q2 = ifft(fft(q2) * kin_half)
    return FieldPair(q1, q2, t + dt)


def _comp_energy(cfg, e_before, e_after):
    """Trapezoid mean of the compensation energy over one step."""
    mode = cfg.compensation
    if mode is GpeCompensation.None_:
        return 0j
    if mode is GpeCompensation.ExpectationEnergy:
        return 0.5 * (e_before[0] + e_after[0])
    return local_energy(cfg) + 0.5 * (e_before[1] + e_after[1])


def gpe_step(fields: FieldPair, cfg: GpeConfig, t: float, dt: float | None = None):
    """One Strang step (half kinetic, local, half kinetic) then compensation.

    Returns ``(new_fields, E_c)``; the fields are multiplied by
    exp(+i E_c dt) with E_c the trapezoid mean of the compensation energy
    at the start and end of the step.
    """
    dt = cfg.dt if dt is None else dt
    _check_stability(cfg, dt)
    k2 = cfg.wavenumbers() ** 2
    kin_half = np.exp(-0.25j * k2 * dt)
    new = _split_step(cfg, fields, t, dt, kin_half)
    Ec = _comp_energy(cfg, _energies(cfg, fields, t, k2), _energies(cfg, new, t + dt, k2))
    if Ec != 0:
        f = np.exp(1j * Ec * dt)
        new = FieldPair(new.psi1 * f, new.psi2 * f, new.t)
    return new, Ec


def gpe_evolve(cfg: GpeConfig, initial: FieldPair | None = None, record_stride=None,
               progress=None) -> GpeTrace:
    """Drive the soliton around the loop and extract the peak phase.

    The real part of the extracted phase is the unwrapped phase of the
    dominant spinor component at the grid centre (final vs initial, after
    compensation); the imaginary part is -log of its amplitude ratio.
    """
    T = cfg.n_periods * cfg.period
    n = int(math.ceil(T / cfg.dt - 1e-9))
    dt = T / n
    _check_stability(cfg, dt)
    stride = int(record_stride) if record_stride else max(1, math.ceil(n / 4096))
    fields = soliton_initial(cfg) if initial is None else initial.copy()
    j = cfg.n_grid // 2
    comp0 = np.array([fields.psi1[j], fields.psi2[j]])
    dom = int(np.argmax(np.abs(comp0)))
    ref = comp0[dom]
    if ref == 0:
        raise SolitonLost("initial field vanishes at the grid centre")
    rho0 = float(fields.density[j])
    dx = cfg.domain_length / cfg.n_grid
    k2 = cfg.wavenumbers() ** 2
    kin_half = np.exp(-0.25j * k2 * dt)

    n_rec = (n + stride - 1) // stride + 1
    times = np.empty(n_rec)
    phase = np.empty(n_rec, dtype=complex)
    norms = np.empty(n_rec)
    peaks = np.empty(n_rec)
    times[0], phase[0] = 0.0, 0j
    norms[0], peaks[0] = float(fields.density.sum() * dx), rho0

    unwrapped = 0.0
    prev = ref
    comp = 0j
    irec = 1
    active = cfg.compensation is not GpeCompensation.None_
    e_cur = _energies(cfg, fields, 0.0, k2) if active else None
    for k in range(n):
        t = k * dt
        new = _split_step(cfg, fields, t, dt, kin_half)
        Ec = 0j
        if active:
            e_new = _energies(cfg, new, t + dt, k2)
            Ec = _comp_energy(cfg, e_cur, e_new)
            e_cur = e_new
        if Ec != 0:
            f = np.exp(1j * Ec * dt)
            new = FieldPair(new.psi1 * f, new.psi2 * f, new.t)
            comp += Ec * dt
            # only the nonlinear term feels the amplitude part of f
            shift = e_new[2] * (abs(f) ** 2 - 1)
            e_cur = (e_new[0] + shift, e_new[1] + shift, e_new[2] + shift)
        fields = new
        cur = fields.psi1[j] if dom == 0 else fields.psi2[j]
        if cur == 0:
            raise SolitonLost("peak component vanished")
        unwrapped += float(np.angle(cur / prev))
        prev = cur
        if (k + 1) % stride == 0 or k + 1 == n:
            rho = float(fields.density[j])
            nrm = float(fields.density.sum() * dx)
            # shape guard: peak density relative to the total norm, so that a
            # uniform gain or loss of the spinor does not count as breakdown
            if not (rho / rho0) >= cfg.peak_loss * (nrm / norms[0]):
                raise SolitonLost(
                    f"peak density fell below {cfg.peak_loss:g} of its norm-scaled initial value"
                )
            times[irec] = (k + 1) * dt
            phase[irec] = complex(unwrapped, -math.log(abs(cur) / abs(ref)))
            norms[irec] = nrm
            peaks[irec] = rho
            irec += 1
            if progress:
                progress(k + 1, n)
    return GpeTrace(
        times=times[:irec],
        center_phase=phase[:irec],
        norms=norms[:irec],
        peak_density=peaks[:irec],
        extracted_phase=complex(phase[irec - 1]),
        comp_integral=comp,
        dominant=dom,
        final=fields,
        config=cfg,
        dt=dt,
        n_steps=n,
    )


# --------------------------------------------------------------------------
# units

@dataclass(frozen=True)
class UnitsReport:
    length_unit_um: float
    time_unit_s: float
    g_from_scattering: float
    g_used: float
    width_dimensionless: float
    width_um: float
    fwhm_um: float
    n_particles: float
    axial_length_um: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def units_report(omega_perp_hz: float, omega_x_hz: float, mass_amu: float,
                 scattering_length_bohr: float, cfg: GpeConfig | None = None,
                 amplitude: float | None = None, g: float | None = None) -> UnitsReport:
    """Convert the dimensionless soliton to laboratory units.

    Frequencies are ordinary frequencies (Hz, multiplied by 2 pi here).
    Lengths are in units of the transverse oscillator length
    l = sqrt(hbar / (m w_perp)); the 1D coupling is g = 2 a_s / l.  The
    soliton width uses ``g`` (default: ``cfg.g``), falling back to the
    value derived from the scattering length.  The density sech^2(x/w)
    has FWHM 2 w ln(1 + sqrt 2) and N = 2 A^2 w particles.
    """
    if min(omega_perp_hz, omega_x_hz, mass_amu) <= 0:
        raise ValueError("frequencies and mass must be positive")
    m = mass_amu * constants.atomic_mass
    w_perp = 2 * np.pi * omega_perp_hz
    ell = math.sqrt(constants.hbar / (m * w_perp))
    g_scat = 2 * scattering_length_bohr * constants.physical_constants["Bohr radius"][0] / ell
    if g is None:
        g = cfg.g if cfg is not None else g_scat
    if amplitude is None:
        amplitude = cfg.amplitude if cfg is not None else 50.0
    if g == 0 or amplitude == 0:
        raise ValueError("g and amplitude must be nonzero for a soliton")
    w = 1.0 / (abs(amplitude) * math.sqrt(abs(g)))
    return UnitsReport(
        length_unit_um=ell * 1e6,
        time_unit_s=1.0 / w_perp,
        g_from_scattering=g_scat,
        g_used=g,
        width_dimensionless=w,
        width_um=w * ell * 1e6,
        fwhm_um=2 * w * math.log(1 + math.sqrt(2)) * ell * 1e6,
        n_particles=2 * amplitude ** 2 * w,
        axial_length_um=math.sqrt(constants.hbar / (m * 2 * np.pi * omega_x_hz)) * 1e6,
    )
