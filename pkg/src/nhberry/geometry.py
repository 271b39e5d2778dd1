"""Berry connections, curvatures, loop phases and monopole charge maps.

Three connection forms are provided for a band ``n`` with fixed-gauge right
vector |R_n>, left vector |L_n> and the other band's right vector |R_m>:

    LR       i <L_n|dR_n> / <L_n|R_n>
    TildeRR  i (<R_n|dR_n><R_m|R_m> - <R_m|dR_n><R_n|R_m>)
               / (<R_n|R_n><R_m|R_m> - |<R_m|R_n>|^2)
    RR       i <R_n|dR_n> / <R_n|R_n>

Gradients of the eigenvectors are central differences of the closed-form
gauge vectors.  The loop integral of a connection is the (complex)
geometric phase; the flux of its curl divided by 4 pi is the enclosed
monopole charge, so the Hermitian point monopole reads -1/2.
"""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from .errors import (
    QuadratureNotConverged,
    SampleOnSingularity,
    StringProximity,
    UnsupportedBand,
)
from .model import ModelConfig, ParamPoint, gauge_vectors, parse_band

__all__ = [
    "ConnectionKind",
    "ConnectionSample",
    "CurvatureSample",
    "LoopSpec",
    "Sphere",
    "Pillbox",
    "ChargeCell",
    "ChargeReport",
    "connection",
    "connection_array",
    "curvature_fd",
    "curvature_fd_array",
    "curvature_analytic",
    "curvature_analytic_array",
    "loop_phase",
    "wrap_phase",
    "surface_flux",
    "disk_charge_map",
]

STRING_TOL = 1e-7


class ConnectionKind(enum.Enum):
    LR = "LR"
    TildeRR = "TildeRR"
    RR = "RR"

    @classmethod
    def coerce(cls, kind) -> "ConnectionKind":
        if isinstance(kind, cls):
            return kind
        key = str(kind).strip().lower().replace("_", "").replace("~", "tilde")
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown connection kind {kind!r}")


@dataclass(frozen=True)
class ConnectionSample:
    kind: ConnectionKind
    band: int
    point: ParamPoint
    A: np.ndarray


@dataclass(frozen=True)
class CurvatureSample:
    kind: ConnectionKind
    band: int
    point: ParamPoint
    B: np.ndarray


@dataclass(frozen=True)
class LoopSpec:
    """Horizontal circle X = r cos t, Y = r sin t at height ``z``."""

    z: float
    r: float
    n_segments: int = 64
    orientation: str = "ccw"
    z0: float | None = None  # optional ring check at construction

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("loop radius must be positive")
        if self.n_segments < 8:
            raise ValueError("n_segments must be >= 8")
        if self.orientation not in ("ccw", "cw"):
            raise ValueError("orientation must be 'ccw' or 'cw'")
        if self.z0 is not None and self.z == 0 and self.r <= abs(self.z0):
            raise SampleOnSingularity(
                f"loop at Z=0, r={self.r} lies on the branch disk of radius {abs(self.z0)}"
            )

    def points(self, theta):
        return np.stack(
            [self.r * np.cos(theta), self.r * np.sin(theta), np.full_like(theta, self.z)],
            axis=-1,
        )

    def tangent(self, theta):
        return np.stack(
            [-self.r * np.sin(theta), self.r * np.cos(theta), np.zeros_like(theta)],
            axis=-1,
        )


@dataclass(frozen=True)
class Sphere:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0


@dataclass(frozen=True)
class Pillbox:
    """Annular sector r_lo..r_hi, phi_lo..phi_hi, |Z| <= height/2."""

    r_lo: float
    r_hi: float
    phi_lo: float = 0.0
    phi_hi: float = 2 * np.pi
    height: float = 1e-2


@dataclass(frozen=True)
class ChargeCell:
    r_lo: float
    r_hi: float
    phi_lo: float
    phi_hi: float
    charge: complex

    @property
    def center(self):
        r = 0.0 if self.r_lo == 0 else 0.5 * (self.r_lo + self.r_hi)
        phi = 0.5 * (self.phi_lo + self.phi_hi)
        return (r * np.cos(phi), r * np.sin(phi), 0.0)


@dataclass
class ChargeReport:
    total: complex
    mu_S: complex
    mu_N: complex
    cells: list = field(default_factory=list)
    kind: str = ""
    band: int = 1
    z0: float = 0.0

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "band": self.band,
            "z0": self.z0,
            "n_cells": len(self.cells),
            "total": self.total,
            "mu_S": self.mu_S,
            "mu_N": self.mu_N,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r_lo", "r_hi", "phi_lo", "phi_hi", "X", "Y", "Z",
                    "charge_re", "charge_im"])
        for c in self.cells:
            X, Y, Z = c.center
            w.writerow([_fmt(v) for v in (c.r_lo, c.r_hi, c.phi_lo, c.phi_hi, X, Y, Z,
                                          c.charge.real, c.charge.imag)])
        return buf.getvalue()

    def to_json(self) -> str:
        s = self.summary()
        for k in ("total", "mu_S", "mu_N"):
            s[k] = {"re": s[k].real, "im": s[k].imag}
        return json.dumps(s, indent=2, sort_keys=True)


def _fmt(v: float) -> str:
    return "%.17g" % v


def wrap_phase(phi):
    """Wrap the real part of a (complex) phase into (-pi, pi]."""
    phi = complex(phi)
    re = -((-phi.real + np.pi) % (2 * np.pi) - np.pi)
    return complex(re, phi.imag)


# --------------------------------------------------------------------------
# connections

def _inner(u, v):
    return np.sum(np.conj(u) * v, axis=-1)


def _check_regular(P, z0, tol, what="sample"):
    a = gauge_vectors(P[..., 0], P[..., 1], P[..., 2], z0, 1, tol)[3]
    bad = a < tol
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise SampleOnSingularity(f"{what} {P[tuple(idx)]} has a < {tol:g}")


def _vectors(P, z0, band, tol, gauge=None):
    R, L, _, _ = gauge_vectors(P[..., 0], P[..., 1], P[..., 2], z0, band, tol)
    if gauge is not None:
        R = R * np.asarray(gauge(P[..., 0], P[..., 1], P[..., 2]))[..., None]
    return R, L


def _default_step(P, scale=1e-5):
    return scale * np.maximum(1.0, np.linalg.norm(P, axis=-1))


def _gradient(P, z0, band, tol, h, gauge=None, richardson=False):
    """Central-difference gradient of the right vector, shape (N, 3, 2)."""
    rho = np.hypot(P[:, 0], P[:, 1])
    straddle = (rho <= abs(z0)) & (np.abs(P[:, 2]) <= (h if not richardson else h))
    if z0 != 0 and np.any(straddle):
        raise SampleOnSingularity("difference stencil straddles the branch disk")
    grads = np.empty(P.shape[:1] + (3, 2), dtype=complex)
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        def diff(step):
            Pp = P + step[:, None] * e
            Pm = P - step[:, None] * e
            _check_regular(Pp, z0, tol, "stencil point")
            _check_regular(Pm, z0, tol, "stencil point")
            Rp, _ = _vectors(Pp, z0, band, tol, gauge)
            Rm, _ = _vectors(Pm, z0, band, tol, gauge)
            return (Rp - Rm) / (2 * step[:, None])
        g = diff(h)
        if richardson:
            g = (4 * diff(h / 2) - g) / 3
        grads[:, j, :] = g
    return grads


def connection_array(kind, band, P, cfg: ModelConfig, h=None, gauge=None,
                     richardson=False) -> np.ndarray:
    """Vectorised connection at points ``P`` of shape (N, 3); returns (N, 3).

    ``gauge`` is an optional callable c(X, Y, Z) multiplying the band's right
    vector, used to probe gauge covariance.
    """
    kind = ConnectionKind.coerce(kind)
    band = parse_band(band)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    z0, tol = cfg.z0, cfg.degeneracy_tol
    h = _default_step(P) if h is None else np.broadcast_to(np.asarray(h, float), P.shape[:1])
    if np.any(h <= 0):
        raise ValueError("difference step must be positive")
    _check_regular(P, z0, tol)
    R, L = _vectors(P, z0, band, tol, gauge)
    scale = np.maximum(1.0, np.linalg.norm(P, axis=-1))
    if np.any(np.linalg.norm(R, axis=-1) < STRING_TOL * scale):
        raise StringProximity("sample lies on the nodal line of the gauge vector")
    dR = _gradient(P, z0, band, tol, h, gauge, richardson)
    Rc = np.conj(R)[:, None, :]
    if kind is ConnectionKind.RR:
        A = 1j * np.sum(Rc * dR, -1) / _inner(R, R)[:, None]
    elif kind is ConnectionKind.LR:
        Lc = np.conj(L)[:, None, :]
        A = 1j * np.sum(Lc * dR, -1) / _inner(L, R)[:, None]
    else:
        Ro, _ = _vectors(P, z0, -band, tol)
        if np.any(np.linalg.norm(Ro, axis=-1) < STRING_TOL * scale):
            raise StringProximity("partner-band gauge vector vanishes at sample")
        oo = _inner(Ro, Ro)[:, None]
        on = _inner(Ro, R)[:, None]
        num = np.sum(Rc * dR, -1) * oo - np.sum(np.conj(Ro)[:, None, :] * dR, -1) * np.conj(on)
        den = _inner(R, R)[:, None] * oo - np.abs(on) ** 2
        A = 1j * num / den
    return A


def connection(kind, band, p, cfg: ModelConfig, h=None, gauge=None,
               richardson=False) -> ConnectionSample:
    """Berry connection of the given form at a single point."""
    p = ParamPoint.coerce(p)
    A = connection_array(kind, band, p.as_array()[None, :], cfg, h, gauge, richardson)[0]
    return ConnectionSample(ConnectionKind.coerce(kind), parse_band(band), p, A)


# --------------------------------------------------------------------------
# curvature

_FD4 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))


def curvature_fd_array(kind, band, P, cfg: ModelConfig, h=None, h_outer=None):
    """Curl of the connection by fourth-order central differences, (N, 3).

    The inner gradient uses step ``h`` (default 1e-4 scale, Richardson
    extrapolated); the outer curl uses ``h_outer`` (default 1e-3 scale,
    shrunk near the Z axis and near the branch disk so the stencil never
    crosses them).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    scale = np.maximum(1.0, np.linalg.norm(P, axis=-1))
    if h_outer is None:
        H = 1e-3 * scale
        rho = np.hypot(P[:, 0], P[:, 1])
        H = np.minimum(H, 0.2 * np.maximum(rho, 1e-12))
        near_disk = rho <= abs(cfg.z0)
        H = np.where(near_disk, np.minimum(H, 0.2 * np.abs(P[:, 2])), H)
    else:
        H = np.broadcast_to(np.asarray(h_outer, float), P.shape[:1]).copy()
    if h is None:
        h = np.minimum(1e-4 * scale, 0.05 * H)
    jac = np.zeros(P.shape[:1] + (3, 3), dtype=complex)  # jac[:, j, k] = d_j A_k
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        for m, w in _FD4:
            A = connection_array(kind, band, P + (m * H)[:, None] * e, cfg, h,
                                 richardson=True)
            jac[:, j, :] += w * A / H[:, None]
    return np.stack(
        [jac[:, 1, 2] - jac[:, 2, 1], jac[:, 2, 0] - jac[:, 0, 2], jac[:, 0, 1] - jac[:, 1, 0]],
        axis=-1,
    )


def curvature_fd(kind, band, p, cfg: ModelConfig, h=None, h_outer=None) -> CurvatureSample:
    p = ParamPoint.coerce(p)
    B = curvature_fd_array(kind, band, p.as_array()[None, :], cfg, h, h_outer)[0]
    return CurvatureSample(ConnectionKind.coerce(kind), parse_band(band), p, B)


def curvature_analytic_array(kind, P, cfg: ModelConfig) -> np.ndarray:
    """Closed-form curvature of band + for RR and TildeRR (= LR), (N, 3).

    TildeRR:  B = -(X, Y, Z + i z0) / (2 E^3),  E = a + ib.
    RR:       B_x = [2 rho^2 (Y z0 - a X) + 2 D (X Z - Y z0)] / ((a^2+b^2) D^2)
              B_y = [2 rho^2 (-X z0 - a Y) + 2 D (Y Z + X z0)] / ((a^2+b^2) D^2)
              B_z = -Z / (2 a (a^2 + b^2))      (= -b / (2 z0 (a^2+b^2)))
    with D = rho^2 + (a - Z)^2 + (b - z0)^2.
    """
    kind = ConnectionKind.coerce(kind)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    X, Y, Z = P[:, 0], P[:, 1], P[:, 2]
    z0 = cfg.z0
    _, _, E, a = gauge_vectors(X, Y, Z, z0, 1, cfg.degeneracy_tol)
    if np.any(a < cfg.degeneracy_tol):
        raise SampleOnSingularity("closed-form curvature requested on the branch disk")
    if kind is not ConnectionKind.RR:
        return -np.stack([X, Y, Z + 1j * z0], axis=-1) / (2 * E[:, None] ** 3)
    b = E.imag
    rho2 = X * X + Y * Y
    D = rho2 + (a - Z) ** 2 + (b - z0) ** 2
    m2 = a * a + b * b
    with np.errstate(invalid="ignore", divide="ignore"):
        Bx = (2 * rho2 * (Y * z0 - a * X) + 2 * D * (X * Z - Y * z0)) / (m2 * D * D)
        By = (2 * rho2 * (-X * z0 - a * Y) + 2 * D * (Y * Z + X * z0)) / (m2 * D * D)
    # on the +Z axis D -> 0 but the field is finite and axial
    Bx = np.where(D > 0, Bx, 0.0)
    By = np.where(D > 0, By, 0.0)
    Bz = -Z / (2 * a * m2)
    return np.stack([Bx, By, Bz], axis=-1).astype(complex)


def curvature_analytic(kind, p, cfg: ModelConfig, band=1) -> CurvatureSample:
    """Closed-form curvature; only band + has a closed form."""
    band = parse_band(band)
    if band != 1:
        raise UnsupportedBand("closed-form curvature exists for band + only")
    kind = ConnectionKind.coerce(kind)
    p = ParamPoint.coerce(p)
    B = curvature_analytic_array(kind, p.as_array()[None, :], cfg)[0]
    return CurvatureSample(kind, band, p, B)


def _field_fn(kind, band, cfg, method):
    kind = ConnectionKind.coerce(kind)
    band = parse_band(band)
    if method not in ("auto", "analytic", "fd"):
        raise ValueError(f"unknown method {method!r}")
    if method == "analytic" or (method == "auto" and band == 1):
        if band != 1:
            raise UnsupportedBand("closed-form curvature exists for band + only")
        return lambda P: curvature_analytic_array(kind, P, cfg)
    return lambda P: curvature_fd_array(kind, band, P, cfg)


# --------------------------------------------------------------------------
# loop integrals

def loop_phase(kind, band, loop: LoopSpec, cfg: ModelConfig, tol=1e-8,
               max_segments=2 ** 20, principal=True, gauge=None, h=None) -> complex:
    """Loop integral of the connection around ``loop``.

    Periodic trapezoid rule, doubling the number of segments until two
    successive estimates differ by less than ``tol``.  With
    ``principal=True`` the real part is wrapped into (-pi, pi]; the raw
    value in the fixed gauge carries the 2 pi winding of the nodal line.
    """
    n = int(loop.n_segments)

    def integrand(theta):
        P = loop.points(theta)
        A = connection_array(kind, band, P, cfg, h=h, gauge=gauge)
        return np.sum(A * loop.tangent(theta), axis=-1)

    theta = 2 * np.pi * np.arange(n) / n
    total = integrand(theta).sum()
    value = 2 * np.pi * total / n
    while True:
        mid = 2 * np.pi * (np.arange(n) + 0.5) / n
        total = total + integrand(mid).sum()
        n *= 2
        new = 2 * np.pi * total / n
        change = abs(new - value)
        value = new
        if change < tol:
            break
        if n >= max_segments:
            raise QuadratureNotConverged(
                f"loop integral not converged at {n} segments (last change {change:.3g})"
            )
    if loop.orientation == "cw":
        value = -value
    return wrap_phase(value) if principal else complex(value)


# --------------------------------------------------------------------------
# fluxes

def _sphere_flux(fieldf, sphere: Sphere, n_theta, n_phi):
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    U, PHI = np.meshgrid(u, phi, indexing="ij")
    s = np.sqrt(1 - U * U)
    nrm = np.stack([s * np.cos(PHI), s * np.sin(PHI), U], axis=-1).reshape(-1, 3)
    P = np.asarray(sphere.center, float) + sphere.radius * nrm
    B = fieldf(P)
    flux = np.sum(B * nrm, axis=-1).reshape(n_theta, n_phi)
    return (wu @ flux.sum(axis=1)) * (2 * np.pi / n_phi) * sphere.radius ** 2


def surface_flux(kind, band, surface, cfg: ModelConfig, n_theta=64, n_phi=64,
                 method="auto", tol=1e-6, max_refine=3) -> complex:
    """Enclosed monopole charge (1/4 pi) * flux of the curvature.

    ``surface`` is a :class:`Sphere` (Gauss-Legendre in cos(theta) times
    uniform phi, refined by doubling until two estimates agree to ``tol``)
    or a :class:`Pillbox` cell straddling Z = 0.
    """
    if n_theta < 16 or n_phi < 16:
        raise ValueError("quadrature resolutions must be >= 16")
    fieldf = _field_fn(kind, band, cfg, method)
    if isinstance(surface, Pillbox):
        q = _cell_charges(
            fieldf, cfg,
            np.array([surface.r_lo, surface.r_hi]),
            np.array([surface.phi_lo, surface.phi_hi]),
            0.5 * surface.height,
            central=surface.r_lo == 0,
        )
        return complex(np.ravel(q[0])[0])
    if not isinstance(surface, Sphere):
        raise TypeError("surface must be a Sphere or Pillbox")
    c = np.asarray(surface.center, float)
    if abs(c[2]) <= surface.radius:
        # the sphere meets Z = 0 in a circle whose points lie at distances
        # |rho_c - cut| .. rho_c + cut from the axis
        cut = np.sqrt(surface.radius ** 2 - c[2] ** 2)
        if abs(np.hypot(c[0], c[1]) - cut) <= abs(cfg.z0):
            raise SampleOnSingularity("sphere intersects the branch disk")
    prev = _sphere_flux(fieldf, surface, n_theta, n_phi)
    for _ in range(max_refine):
        n_theta, n_phi = 2 * n_theta, 2 * n_phi
        cur = _sphere_flux(fieldf, surface, n_theta, n_phi)
        if abs(cur - prev) < tol:
            return complex(cur / (4 * np.pi))
        prev = cur
    raise QuadratureNotConverged("sphere flux not converged")


# --------------------------------------------------------------------------
# disk charge map

def _cyl_basis(phi):
    c, s = np.cos(phi), np.sin(phi)
    er = np.stack([c, s, np.zeros_like(c)], -1)
    ep = np.stack([-s, c, np.zeros_like(c)], -1)
    return er, ep


def _cell_charges(fieldf, cfg, r_edges, phi_edges, eps, central=True,
                  m_phi=4, m_face=16, epsabs=1e-11, epsrel=1e-10):
    """Pillbox charges of annular-sector cells straddling Z = 0.

    Returns ``(charges, rings)`` where charges[i] is an array over the
    sectors of ring i (a single entry for a central full-disk cell).
    Every face shared by two cells is integrated once, so internal faces
    cancel exactly in the total.
    """
    n_r = len(r_edges) - 1
    n_a = len(phi_edges) - 1
    xg, wg = np.polynomial.legendre.leggauss(m_phi)
    lo, hi = phi_edges[:-1], phi_edges[1:]
    half = 0.5 * (hi - lo)
    phi = (0.5 * (hi + lo))[:, None] + half[:, None] * xg[None, :]  # (n_a, m_phi)
    wphi = half[:, None] * wg[None, :]
    phi_f = phi.ravel()
    er, ep = _cyl_basis(phi_f)

    def sector_sum(vals):
        return (vals.reshape(n_a, m_phi) * wphi).sum(axis=1)

    def disk_face(r0, r1, z):
        def f(r):
            P = np.stack([r * np.cos(phi_f), r * np.sin(phi_f), np.full_like(phi_f, z)], -1)
            return fieldf(P)[:, 2] * r
        val, _ = quad_vec(f, r0, r1, epsabs=epsabs, epsrel=epsrel, limit=2000)
        return sector_sum(val)

    def skirt(r):
        def f(z):
            P = np.stack([r * np.cos(phi_f), r * np.sin(phi_f), np.full_like(phi_f, z)], -1)
            return np.sum(fieldf(P) * er, -1) * r
        # the field jumps across the disk, so integrate each half separately
        lo_half, _ = quad_vec(f, -eps, 0.0, epsabs=epsabs, epsrel=epsrel, limit=2000)
        hi_half, _ = quad_vec(f, 0.0, eps, epsabs=epsabs, epsrel=epsrel, limit=2000)
        return sector_sum(lo_half + hi_half)

    xr, wr = np.polynomial.legendre.leggauss(m_face)

    def wedge_face(r0, r1, ph):
        rr = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * xr
        zz = eps * xr
        R_, Z_ = np.meshgrid(rr, zz, indexing="ij")
        P = np.stack([R_ * np.cos(ph), R_ * np.sin(ph), Z_], -1).reshape(-1, 3)
        _, e_p = _cyl_basis(np.array(ph))
        Bp = (fieldf(P) @ e_p).reshape(m_face, m_face)
        return 0.25 * (r1 - r0) * 2 * eps * (wr @ Bp @ wr)

    skirts = [None] + [skirt(r_edges[i]) for i in range(1, n_r + 1)]
    charges = []
    for i in range(n_r):
        r0, r1 = r_edges[i], r_edges[i + 1]
        flux = disk_face(r0, r1, eps) - disk_face(r0, r1, -eps)
        flux = flux + skirts[i + 1]
        if i > 0:
            flux = flux - skirts[i]
        if i == 0 and central and r0 == 0:
            charges.append(np.array([flux.sum()]) / (4 * np.pi))
            continue
        if n_a > 1 or (phi_edges[-1] - phi_edges[0]) < 2 * np.pi - 1e-14:
            side = np.array([wedge_face(r0, r1, ph) for ph in phi_edges])
            flux = flux + side[1:] - side[:-1]
        charges.append(flux / (4 * np.pi))
    return charges, r_edges


def disk_charge_map(kind, band, cfg: ModelConfig, grid=None, pillbox_height=1e-2,
                    method="auto") -> ChargeReport:
    """Tile the Z = 0 disk with pillbox cells and measure their charges.

    ``grid = (r_max, n_r, n_angle)``.  The innermost cell is a single full
    disk around the origin; the remaining rings are split into ``n_angle``
    sectors.  The default grid puts the branch ring r = |z0| in the middle
    of a cell so that no face touches it.
    """
    kind = ConnectionKind.coerce(kind)
    band = parse_band(band)
    z0 = abs(cfg.z0)
    if grid is None:
        grid = (64 * z0 / 31.5 if z0 > 0 else 2.0, 64, 64)
    r_max, n_r, n_angle = float(grid[0]), int(grid[1]), int(grid[2])
    if n_r < 1 or n_angle < 1:
        raise ValueError("grid needs at least one ring and one sector")
    if not r_max > z0:
        raise ValueError("r_max must exceed the ring radius |z0|")
    if not 0 < pillbox_height < (z0 if z0 > 0 else np.inf):
        raise ValueError("pillbox_height must be positive and below the ring radius")
    r_edges = np.linspace(0.0, r_max, n_r + 1)
    if z0 > 0 and np.any(np.abs(r_edges[1:] - z0) <= pillbox_height):
        raise SampleOnSingularity(
            "a radial cell face touches the degeneracy ring; shift r_max or n_r"
        )
    phi_edges = np.linspace(0.0, 2 * np.pi, n_angle + 1)
    fieldf = _field_fn(kind, band, cfg, method)
    charges, _ = _cell_charges(fieldf, cfg, r_edges, phi_edges, 0.5 * pillbox_height)
    cells = [ChargeCell(0.0, r_edges[1], 0.0, 2 * np.pi, complex(charges[0][0]))]
    for i in range(1, n_r):
        for j in range(n_angle):
            cells.append(ChargeCell(r_edges[i], r_edges[i + 1], phi_edges[j],
                                    phi_edges[j + 1], complex(charges[i][j])))
    q = np.array([c.charge for c in cells])
    neg = q.real < 0
    mu_S = complex(q[neg].sum())
    mu_N = complex(q[~neg].sum())
    return ChargeReport(total=mu_S + mu_N, mu_S=mu_S, mu_N=mu_N, cells=cells,
                        kind=kind.value, band=band, z0=cfg.z0)
