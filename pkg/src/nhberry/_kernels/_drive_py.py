"""Pure-Python driven two-level integrator (reference and fallback).

Mirrors ``_drive.pyx`` statement by statement; see there for the
conventions.  Uses builtin complex arithmetic only.
"""
import math

import numpy as np

MODE_EXPECTATION = 0
MODE_EIGENVALUE = 1
MODE_NONE = 2

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_PHASE_JUMP = 2


def _eplus(X, Y, Z, z0):
    s = X * X + Y * Y + Z * Z - z0 * z0
    q = 2.0 * Z * z0
    root = math.hypot(s, q)
    if s >= 0:
        a2 = 0.5 * (s + root)
    else:
        a2 = 0.5 * q * q / (root - s)
    a = math.sqrt(a2)
    b = Z * z0 / a if a > 0 else 0.0
    return complex(a, b)


def _expect(p1, p2, d, u, l):
    h1 = d * p1 + u * p2
    h2 = l * p1 - d * p2
    nrm = (p1.real * p1.real + p1.imag * p1.imag + p2.real * p2.real + p2.imag * p2.imag)
    return (p1.conjugate() * h1 + p2.conjugate() * h2) / nrm


def _ksum(s, v, c):
    y = v - c
    t = s + y
    return t, (t - s) - y


def drive(z, r, omega, z0, band, mode, dt, n_steps, stride, psi0, overflow=1e150):
    n_rec = (n_steps + stride - 1) // stride + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, 2), dtype=complex)
    e_expect = np.empty(n_rec, dtype=complex)
    e_band = np.empty(n_rec, dtype=complex)
    fid = np.empty(n_rec)
    comp_rec = np.empty(n_rec, dtype=complex)
    inte_rec = np.empty(n_rec, dtype=complex)
    inteb_rec = np.empty(n_rec, dtype=complex)
    intde_rec = np.empty(n_rec, dtype=complex)
    track_rec = np.empty(n_rec)

    d = complex(z, z0)
    q1, q2 = complex(psi0[0]), complex(psi0[1])
    comp = inte = inteb = intde = 0j
    c_comp = c_inte = c_inteb = c_intde = 0j
    track = 0.0
    min_fid = 1.0
    status = STATUS_OK
    fail_step = -1

    X0, Y0 = r, 0.0
    u = complex(X0, -Y0)
    l = complex(X0, Y0)
    Eb0 = band * _eplus(X0, Y0, z, z0)
    E0 = _expect(q1, q2, d, u, l)

    def record(i, t, fidv):
        times[i] = t
        states[i, 0] = q1
        states[i, 1] = q2
        e_expect[i] = E0
        e_band[i] = Eb0
        fid[i] = fidv
        comp_rec[i] = comp
        inte_rec[i] = inte
        inteb_rec[i] = inteb
        intde_rec[i] = intde
        track_rec[i] = track

    v1, v2 = u, -d + Eb0
    nv = abs(v1) ** 2 + abs(v2) ** 2
    nq = abs(q1) ** 2 + abs(q2) ** 2
    record(0, 0.0, abs(v1.conjugate() * q1 + v2.conjugate() * q2) ** 2 / (nv * nq))
    irec = 1
    for k in range(n_steps):
        t = k * dt
        tm = t + 0.5 * dt
        t1 = (k + 1) * dt
        cm, sm = math.cos(omega * tm), math.sin(omega * tm)
        c1, s1 = math.cos(omega * t1), math.sin(omega * t1)
        um, lm = complex(r * cm, -r * sm), complex(r * cm, r * sm)
        u1, l1 = complex(r * c1, -r * s1), complex(r * c1, r * s1)

        k1a = -1j * (d * q1 + u * q2)
        k1b = -1j * (l * q1 - d * q2)
        a1 = q1 + 0.5 * dt * k1a
        b1 = q2 + 0.5 * dt * k1b
        k2a = -1j * (d * a1 + um * b1)
        k2b = -1j * (lm * a1 - d * b1)
        a1 = q1 + 0.5 * dt * k2a
        b1 = q2 + 0.5 * dt * k2b
        k3a = -1j * (d * a1 + um * b1)
        k3b = -1j * (lm * a1 - d * b1)
        a1 = q1 + dt * k3a
        b1 = q2 + dt * k3b
        k4a = -1j * (d * a1 + u1 * b1)
        k4b = -1j * (l1 * a1 - d * b1)
        n1 = q1 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        n2 = q2 + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)

        # cubic Hermite midpoint state for Simpson energy quadrature
        f1a = -1j * (d * n1 + u1 * n2)
        f1b = -1j * (l1 * n1 - d * n2)
        ma = 0.5 * (q1 + n1) + 0.125 * dt * (k1a - f1a)
        mb = 0.5 * (q2 + n2) + 0.125 * dt * (k1b - f1b)
        Em = _expect(ma, mb, d, um, lm)
        E1 = _expect(n1, n2, d, u1, l1)
        Ebm = band * _eplus(r * cm, r * sm, z, z0)
        Eb1 = band * _eplus(r * c1, r * s1, z, z0)
        Ebar = (E0 + 4.0 * Em + E1) / 6.0
        Ebbar = (Eb0 + 4.0 * Ebm + Eb1) / 6.0
        inte, c_inte = _ksum(inte, Ebar * dt, c_inte)
        inteb, c_inteb = _ksum(inteb, Ebbar * dt, c_inteb)
        intde, c_intde = _ksum(intde, (Ebbar - Ebar) * dt, c_intde)

        if mode == MODE_EXPECTATION:
            Ec = Ebar
        elif mode == MODE_EIGENVALUE:
            Ec = Ebbar
        else:
            Ec = 0j
        if mode != MODE_NONE:
            x = -Ec.imag * dt
            ph = Ec.real * dt
            f = math.exp(x) * complex(math.cos(ph), math.sin(ph))
            n1 *= f
            n2 *= f
            comp, c_comp = _ksum(comp, Ec * dt, c_comp)

        ov = q1.conjugate() * n1 + q2.conjugate() * n2
        inc = math.atan2(ov.imag, ov.real)
        if abs(inc) > 0.5 * math.pi and status == STATUS_OK:
            status = STATUS_PHASE_JUMP
            fail_step = k
        track += inc

        v1, v2 = u1, -d + Eb1
        nv = v1.real ** 2 + v1.imag ** 2 + v2.real ** 2 + v2.imag ** 2
        nq = n1.real ** 2 + n1.imag ** 2 + n2.real ** 2 + n2.imag ** 2
        if not nq < overflow or nq == 0.0:
            status = STATUS_OVERFLOW
            fail_step = k
            q1, q2 = n1, n2
            break
        ov = v1.conjugate() * n1 + v2.conjugate() * n2
        fidv = (ov.real ** 2 + ov.imag ** 2) / (nv * nq)
        if fidv < min_fid:
            min_fid = fidv

        q1, q2 = n1, n2
        u, l = u1, l1
        E0, Eb0 = E1, Eb1
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            record(irec, t1, fidv)
            irec += 1

    return {
        "times": times[:irec],
        "states": states[:irec],
        "e_expect": e_expect[:irec],
        "e_band": e_band[:irec],
        "fidelity": fid[:irec],
        "comp": comp_rec[:irec],
        "int_e": inte_rec[:irec],
        "int_eb": inteb_rec[:irec],
        "int_de": intde_rec[:irec],
        "track": track_rec[:irec],
        "final_state": np.array([q1, q2]),
        "min_fidelity": min_fid,
        "status": status,
        "fail_step": fail_step,
    }
