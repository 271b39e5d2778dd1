"""Two-level non-Hermitian model H(R) = X sx + Y sy + (Z + i z0) sz.

Eigenvalues are labelled by the sign of their real part, E_pm = +-(a + ib)
with a >= 0, and eigenvectors are kept in the fixed (unnormalised) gauge

    |R_pm> = (X - iY, -Z - i z0 + E_pm)
    |L_pm> = (X - iY, -Z + i z0 + conj(E_pm))      (eigenvectors of H^dagger)

The real-part branch is undefined on the closed disk {Z = 0, X^2+Y^2 <= z0^2};
points with ``a < degeneracy_tol`` are flagged ``singular``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SampleOnSingularity, UnsupportedBand

__all__ = [
    "ParamPoint",
    "ModelConfig",
    "EigenSystem",
    "StringScanReport",
    "parse_band",
    "hamiltonian",
    "eigen_system",
    "on_degeneracy_ring",
    "scan_string",
    "branch",
    "gauge_vectors",
]


@dataclass(frozen=True)
class ParamPoint:
    X: float
    Y: float
    Z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.X, self.Y, self.Z])):
            raise ValueError(f"non-finite parameter point {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.Z], dtype=float)

    @classmethod
    def coerce(cls, p) -> "ParamPoint":
        if isinstance(p, cls):
            return p
        X, Y, Z = (float(v) for v in p)
        return cls(X, Y, Z)


@dataclass(frozen=True)
class ModelConfig:
    z0: float = 0.0
    degeneracy_tol: float = 1e-8

    def __post_init__(self):
        if not self.degeneracy_tol > 0:
            raise ValueError("degeneracy_tol must be positive")
        if not np.isfinite(self.z0):
            raise ValueError("z0 must be finite")


@dataclass(frozen=True)
class EigenSystem:
    a: float
    b: float
    e_plus: complex
    e_minus: complex
    right_plus: np.ndarray
    right_minus: np.ndarray
    left_plus: np.ndarray
    left_minus: np.ndarray
    singular: bool

    def right(self, band: int) -> np.ndarray:
        return self.right_plus if band > 0 else self.right_minus

    def left(self, band: int) -> np.ndarray:
        return self.left_plus if band > 0 else self.left_minus

    def energy(self, band: int) -> complex:
        return self.e_plus if band > 0 else self.e_minus


@dataclass
class StringScanReport:
    band: int
    axis_samples: list = field(default_factory=list)  # (Z, winding)
    endpoint_estimate: float = float("nan")


def parse_band(band) -> int:
    """Map ``+``/``-``/``plus``/``minus``/``+1``/``-1`` to +1 or -1."""
    if isinstance(band, str):
        key = band.strip().lower()
        if key in ("+", "plus", "+1", "1", "p"):
            return 1
        if key in ("-", "minus", "-1", "m"):
            return -1
        raise UnsupportedBand(f"unknown band {band!r}")
    if band in (1, -1):
        return int(band)
    raise UnsupportedBand(f"unknown band {band!r}")


def hamiltonian(p, cfg: ModelConfig) -> np.ndarray:
    p = ParamPoint.coerce(p)
    d = p.Z + 1j * cfg.z0
    return np.array(
        [[d, p.X - 1j * p.Y], [p.X + 1j * p.Y, -d]], dtype=complex
    )


def branch(X, Y, Z, z0, tol=0.0):
    """Real-part branch ``(a, b)`` of E_+ = a + ib, vectorised.

    Uses the cancellation-free form of a^2 when X^2+Y^2+Z^2-z0^2 < 0.
    ``b`` is set to 0 where ``a < tol`` (and where a == 0).
    """
    X, Y, Z = np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float)
    s = X * X + Y * Y + Z * Z - z0 * z0
    q = 2.0 * Z * z0
    root = np.hypot(s, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        a2 = np.where(s >= 0, 0.5 * (s + root), 0.5 * q * q / (root - s))
        a2 = np.where(np.isfinite(a2), a2, 0.0)
        a = np.sqrt(a2)
        ok = a >= max(tol, np.finfo(float).tiny)
        b = np.where(ok, Z * z0 / np.where(ok, a, 1.0), 0.0)
    return a, b


def gauge_vectors(X, Y, Z, z0, band, tol=0.0):
    """Fixed-gauge right and left eigenvectors of ``band``, shape (..., 2).

    Returns ``(right, left, energy, a)``.
    """
    a, b = branch(X, Y, Z, z0, tol)
    E = band * (a + 1j * b)
    off = np.asarray(X) - 1j * np.asarray(Y)
    right = np.stack([off, -np.asarray(Z) - 1j * z0 + E], axis=-1)
    left = np.stack([off, -np.asarray(Z) + 1j * z0 + np.conj(E)], axis=-1)
    return right, left, E, a


def eigen_system(p, cfg: ModelConfig) -> EigenSystem:
    """Branch-selected eigen-decomposition at ``p`` in the fixed gauge."""
    p = ParamPoint.coerce(p)
    a, b = branch(p.X, p.Y, p.Z, cfg.z0, cfg.degeneracy_tol)
    a, b = float(a), float(b)
    singular = a < cfg.degeneracy_tol
    e_plus = complex(a, b)
    off = complex(p.X, -p.Y)
    d = complex(p.Z, cfg.z0)
    return EigenSystem(
        a=a,
        b=b,
        e_plus=e_plus,
        e_minus=-e_plus,
        right_plus=np.array([off, -d + e_plus]),
        right_minus=np.array([off, -d - e_plus]),
        left_plus=np.array([off, -d.conjugate() + e_plus.conjugate()]),
        left_minus=np.array([off, -d.conjugate() - e_plus.conjugate()]),
        singular=singular,
    )


def on_degeneracy_ring(p, cfg: ModelConfig, tol: float) -> bool:
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = ParamPoint.coerce(p)
    return bool(abs(p.Z) <= tol and abs(np.hypot(p.X, p.Y) - abs(cfg.z0)) <= tol)


def _loop_winding(band, cfg, z, radius, n):
    """Raw overlap-product phase of |R_band> around a horizontal circle, / 2pi."""
    theta = 2 * np.pi * np.arange(n) / n
    X, Y = radius * np.cos(theta), radius * np.sin(theta)
    Z = np.full(n, z)
    right, _, _, a = gauge_vectors(X, Y, Z, cfg.z0, band, cfg.degeneracy_tol)
    if np.any(a < cfg.degeneracy_tol):
        raise SampleOnSingularity(f"circle at Z={z} meets the branch disk")
    nxt = np.roll(right, -1, axis=0)
    ratio = np.einsum("ij,ij->i", right.conj(), nxt) / np.einsum(
        "ij,ij->i", right.conj(), right
    )
    return float(np.real(1j * np.sum(np.log(ratio)))) / (2 * np.pi)


def scan_string(band, cfg: ModelConfig, z_range=(-2.0, 2.0), n_samples=80,
                circle_radius=0.01, n_circle=256) -> StringScanReport:
    """Locate the nodal line of the fixed-gauge eigenvector along the Z axis.

    At each sampled height the RR phase accumulated around a small circle
    centred on the axis is rounded to an integer winding.  The endpoint
    estimate is the midpoint between the last two samples whose winding
    differs.  Heights whose circle would lie on the branch disk (Z = 0 with
    ``circle_radius < |z0|``) are skipped.
    """
    band = parse_band(band)
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not 0 < circle_radius < 1:
        raise ValueError("circle_radius must be small and positive")
    zs = np.linspace(z_range[0], z_range[1], n_samples)
    report = StringScanReport(band=band)
    for z in zs:
        if abs(z) < cfg.degeneracy_tol and circle_radius <= abs(cfg.z0):
            continue
        w = _loop_winding(band, cfg, float(z), circle_radius, n_circle)
        report.axis_samples.append((float(z), int(round(w))))
    samples = report.axis_samples
    for (z_a, w_a), (z_b, w_b) in zip(samples, samples[1:]):
        if w_a != w_b:
            report.endpoint_estimate = 0.5 * (z_a + z_b)
    return report
