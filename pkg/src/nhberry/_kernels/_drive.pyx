# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled driven two-level integrator.

Integrates i dpsi/dt = H(R(t)) psi along X = r cos(wt), Y = r sin(wt), Z = z
with classical RK4.  Per step:

* energies E(t) = <psi|H|psi>/<psi|psi> and the band eigenvalue are
  integrated with Simpson's rule, the midpoint state coming from the cubic
  Hermite interpolant of the RK4 step;
* the state is multiplied by exp(+i E_c dt) (compensation), E_c being the
  Simpson mean of E (mode 0), of the band eigenvalue (mode 1), or 0 (mode 2);
* arg <psi_n|psi_n+1> is accumulated into an unwrapped phase track.

Running integrals use compensated summation.
"""
import numpy as np

from libc.math cimport atan2, cos, exp, fabs, hypot, sin, sqrt, M_PI

cdef double complex I = 1j


cdef inline double complex eplus(double X, double Y, double Z, double z0) nogil:
    cdef double s = X * X + Y * Y + Z * Z - z0 * z0
    cdef double q = 2.0 * Z * z0
    cdef double root = hypot(s, q)
    cdef double a2, a, b
    if s >= 0:
        a2 = 0.5 * (s + root)
    else:
        a2 = 0.5 * q * q / (root - s)
    a = sqrt(a2)
    b = Z * z0 / a if a > 0 else 0.0
    return a + I * b


cdef inline double abs2(double complex v) nogil:
    return v.real * v.real + v.imag * v.imag


cdef inline double complex expect(double complex p1, double complex p2, double complex d,
                                  double complex u, double complex l) nogil:
    cdef double complex h1 = d * p1 + u * p2
    cdef double complex h2 = l * p1 - d * p2
    return (p1.conjugate() * h1 + p2.conjugate() * h2) / (abs2(p1) + abs2(p2))


cdef inline double complex ksum(double complex s, double complex v, double complex *c) nogil:
    # compensated (Kahan) summation
    cdef double complex y = v - c[0]
    cdef double complex t = s + y
    c[0] = (t - s) - y
    return t


def drive(double z, double r, double omega, double z0, int band, int mode, double dt,
          long n_steps, long stride, psi0, double overflow=1e150):
    cdef long n_rec = (n_steps + stride - 1) // stride + 1
    times_a = np.empty(n_rec)
    states_a = np.empty((n_rec, 2), dtype=complex)
    ee_a = np.empty(n_rec, dtype=complex)
    eb_a = np.empty(n_rec, dtype=complex)
    fid_a = np.empty(n_rec)
    comp_a = np.empty(n_rec, dtype=complex)
    inte_a = np.empty(n_rec, dtype=complex)
    inteb_a = np.empty(n_rec, dtype=complex)
    intde_a = np.empty(n_rec, dtype=complex)
    track_a = np.empty(n_rec)
    cdef double[:] times = times_a
    cdef double complex[:, :] states = states_a
    cdef double complex[:] e_expect = ee_a
    cdef double complex[:] e_band = eb_a
    cdef double[:] fid = fid_a
    cdef double complex[:] comp_rec = comp_a
    cdef double complex[:] inte_rec = inte_a
    cdef double complex[:] inteb_rec = inteb_a
    cdef double complex[:] intde_rec = intde_a
    cdef double[:] track_rec = track_a

    cdef double complex d = z + I * z0
    cdef double complex q1 = psi0[0]
    cdef double complex q2 = psi0[1]
    cdef double complex comp = 0, inte = 0, inteb = 0, intde = 0
    cdef double complex c_comp = 0, c_inte = 0, c_inteb = 0, c_intde = 0
    cdef double track = 0.0, min_fid = 1.0
    cdef int status = 0
    cdef long fail_step = -1
    cdef double complex u = r, l = r, um, lm, u1, l1
    cdef double complex Eb0 = band * eplus(r, 0.0, z, z0)
    cdef double complex E0 = expect(q1, q2, d, u, l)
    cdef double complex k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b, a1, b1, n1, n2
    cdef double complex f1a, f1b, ma, mb, Em, E1, Ebm, Eb1, Ebar, Ebbar, Ec, f, ov, v1, v2
    cdef double t, tm, t1, cm, sm, c1, s1, inc, nv, nq, fidv, ph, x
    cdef long k, irec

    v1 = u
    v2 = -d + Eb0
    nv = abs2(v1) + abs2(v2)
    nq = abs2(q1) + abs2(q2)
    ov = v1.conjugate() * q1 + v2.conjugate() * q2
    times[0] = 0.0
    states[0, 0] = q1
    states[0, 1] = q2
    e_expect[0] = E0
    e_band[0] = Eb0
    fid[0] = abs2(ov) / (nv * nq)
    comp_rec[0] = 0
    inte_rec[0] = 0
    inteb_rec[0] = 0
    intde_rec[0] = 0
    track_rec[0] = 0.0
    irec = 1

    with nogil:
        for k in range(n_steps):
            t = k * dt
            tm = t + 0.5 * dt
            t1 = (k + 1) * dt
            cm = cos(omega * tm)
            sm = sin(omega * tm)
            c1 = cos(omega * t1)
            s1 = sin(omega * t1)
            um = r * cm - I * (r * sm)
            lm = r * cm + I * (r * sm)
            u1 = r * c1 - I * (r * s1)
            l1 = r * c1 + I * (r * s1)

            k1a = -I * (d * q1 + u * q2)
            k1b = -I * (l * q1 - d * q2)
            a1 = q1 + 0.5 * dt * k1a
            b1 = q2 + 0.5 * dt * k1b
            k2a = -I * (d * a1 + um * b1)
            k2b = -I * (lm * a1 - d * b1)
            a1 = q1 + 0.5 * dt * k2a
            b1 = q2 + 0.5 * dt * k2b
            k3a = -I * (d * a1 + um * b1)
            k3b = -I * (lm * a1 - d * b1)
            a1 = q1 + dt * k3a
            b1 = q2 + dt * k3b
            k4a = -I * (d * a1 + u1 * b1)
            k4b = -I * (l1 * a1 - d * b1)
            n1 = q1 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            n2 = q2 + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)

            f1a = -I * (d * n1 + u1 * n2)
            f1b = -I * (l1 * n1 - d * n2)
            ma = 0.5 * (q1 + n1) + 0.125 * dt * (k1a - f1a)
            mb = 0.5 * (q2 + n2) + 0.125 * dt * (k1b - f1b)
            Em = expect(ma, mb, d, um, lm)
            E1 = expect(n1, n2, d, u1, l1)
            Ebm = band * eplus(r * cm, r * sm, z, z0)
            Eb1 = band * eplus(r * c1, r * s1, z, z0)
            Ebar = (E0 + 4.0 * Em + E1) / 6.0
            Ebbar = (Eb0 + 4.0 * Ebm + Eb1) / 6.0
            inte = ksum(inte, Ebar * dt, &c_inte)
            inteb = ksum(inteb, Ebbar * dt, &c_inteb)
            intde = ksum(intde, (Ebbar - Ebar) * dt, &c_intde)

            if mode == 0:
                Ec = Ebar
            elif mode == 1:
                Ec = Ebbar
            else:
                Ec = 0
            if mode != 2:
                x = -Ec.imag * dt
                ph = Ec.real * dt
                f = exp(x) * (cos(ph) + I * sin(ph))
                n1 = n1 * f
                n2 = n2 * f
                comp = ksum(comp, Ec * dt, &c_comp)

            ov = q1.conjugate() * n1 + q2.conjugate() * n2
            inc = atan2(ov.imag, ov.real)
            if fabs(inc) > 0.5 * M_PI and status == 0:
                status = 2
                fail_step = k
            track = track + inc

            v1 = u1
            v2 = -d + Eb1
            nv = abs2(v1) + abs2(v2)
            nq = abs2(n1) + abs2(n2)
            if not nq < overflow or nq == 0.0:
                status = 1
                fail_step = k
                q1 = n1
                q2 = n2
                break
            ov = v1.conjugate() * n1 + v2.conjugate() * n2
            fidv = abs2(ov) / (nv * nq)
            if fidv < min_fid:
                min_fid = fidv

            q1 = n1
            q2 = n2
            u = u1
            l = l1
            E0 = E1
            Eb0 = Eb1
            if (k + 1) % stride == 0 or k + 1 == n_steps:
                times[irec] = t1
                states[irec, 0] = q1
                states[irec, 1] = q2
                e_expect[irec] = E0
                e_band[irec] = Eb0
                fid[irec] = fidv
                comp_rec[irec] = comp
                inte_rec[irec] = inte
                inteb_rec[irec] = inteb
                intde_rec[irec] = intde
                track_rec[irec] = track
                irec += 1

    return {
        "times": times_a[:irec],
        "states": states_a[:irec],
        "e_expect": ee_a[:irec],
        "e_band": eb_a[:irec],
        "fidelity": fid_a[:irec],
        "comp": comp_a[:irec],
        "int_e": inte_a[:irec],
        "int_eb": inteb_a[:irec],
        "int_de": intde_a[:irec],
        "track": track_a[:irec],
        "final_state": np.array([q1, q2]),
        "min_fidelity": min_fid,
        "status": status,
        "fail_step": fail_step,
    }
