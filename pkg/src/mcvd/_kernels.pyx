# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical core; same functions and semantics as ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, expm1, erf, erfc, log, copysign, fabs

cnp.import_array()

cdef double SQRT2 = sqrt(2.0)
cdef double SQRT_PI = sqrt(3.141592653589793)
cdef double INV_SQRT_2PI = 1.0 / sqrt(2.0 * 3.141592653589793)
cdef double INV_PHI = (sqrt(5.0) - 1.0) / 2.0
cdef double SERIES_OFFSET = 1e-3
cdef double SERIES_CENTRED = 1e-2
cdef double SMALL_RECEIVER = 0.1
cdef double FAR_OFFSET = 10.0

cdef int N_GL = 32
cdef double GL_NODES[32]
cdef double GL_WEIGHTS[32]

_nodes, _weights = np.polynomial.legendre.leggauss(32)
for _i in range(32):
    GL_NODES[_i] = _nodes[_i]
    GL_WEIGHTS[_i] = _weights[_i]


cdef inline void _centred(double a, double v, double* p0, double* c2, double* c4) noexcept nogil:
    cdef double a2 = a * a
    cdef double g
    if a < SERIES_CENTRED:
        p0[0] = 4.0 / (3.0 * SQRT_PI) * a * a2 * (1.0 - 0.6 * a2 + 3.0 / 14.0 * a2 * a2)
    else:
        p0[0] = erf(a) - 2.0 / SQRT_PI * a * exp(-a2)
    g = exp(-a2) * a * a2
    c2[0] = -2.0 / (3.0 * SQRT_PI) * g / v
    c4[0] = g * (2.5 - a2) / (15.0 * SQRT_PI * v * v)


cdef inline double _radial_gl(double m, double s, double radius) noexcept nogil:
    cdef double v = s * s
    cdef double half = 0.5 * radius
    cdef double total = 0.0
    cdef double r, shell
    cdef int i
    for i in range(N_GL):
        r = half * (GL_NODES[i] + 1.0)
        if m > 0.0:
            shell = -expm1(-2.0 * r * m / v) / m
        else:
            shell = 2.0 * r / v
        total += GL_WEIGHTS[i] * r * shell * exp(-0.5 * (r - m) * (r - m) / v)
    return total * half * INV_SQRT_2PI / s


cdef double c_arrival_prob(double wx, double wy, double wz, double ux, double uy,
                           double uz, double omega, double radius, double t) noexcept nogil:
    cdef double mx = wx - ux * t
    cdef double my = wy - uy * t
    cdef double mz = wz - uz * t
    cdef double m = sqrt(mx * mx + my * my + mz * mz)
    cdef double v = 2.0 * omega * t
    cdef double s = sqrt(v)
    cdef double p, p0, c2, c4, m2, lo, hi, core, shell
    if radius < SMALL_RECEIVER * s and m < FAR_OFFSET * s:
        p = _radial_gl(m, s, radius)
    elif m < SERIES_OFFSET * s:
        _centred(radius / (SQRT2 * s), v, &p0, &c2, &c4)
        m2 = m * m
        p = p0 + c2 * m2 + c4 * m2 * m2
    else:
        lo = (radius - m) / s
        hi = (radius + m) / s
        if lo >= 0.0:
            core = 1.0 - 0.5 * erfc(lo / SQRT2) - 0.5 * erfc(hi / SQRT2)
        else:
            core = 0.5 * erfc(-lo / SQRT2) - 0.5 * erfc(hi / SQRT2)
        shell = (s / m) * INV_SQRT_2PI * exp(-0.5 * lo * lo) * (-expm1(-2.0 * radius * m / v))
        p = core - shell
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


def arrival_prob(double wx, double wy, double wz, double ux, double uy, double uz,
                 double omega, double radius, double t):
    return c_arrival_prob(wx, wy, wz, ux, uy, uz, omega, radius, t)


def arrival_prob_dt(double wx, double wy, double wz, double ux, double uy, double uz,
                    double omega, double radius, double t):
    cdef double mx = wx - ux * t
    cdef double my = wy - uy * t
    cdef double mz = wz - uz * t
    cdef double m = sqrt(mx * mx + my * my + mz * mz)
    cdef double v = 2.0 * omega * t
    cdef double s = sqrt(v)
    cdef double m_dot_u = mx * ux + my * uy + mz * uz
    cdef double p0, c2, c4, m2, lo, hi, phi_lo, phi_hi, phi_diff, dp_dm, dp_ds
    if m < SERIES_OFFSET * s:
        _centred(radius / (SQRT2 * s), v, &p0, &c2, &c4)
        m2 = m * m
        return -(2.0 * c2 + 4.0 * c4 * m2) * m_dot_u + (3.0 * c2 + 10.0 * c4 * m2) * 2.0 * omega
    lo = (radius - m) / s
    hi = (radius + m) / s
    phi_lo = INV_SQRT_2PI * exp(-0.5 * lo * lo)
    phi_hi = INV_SQRT_2PI * exp(-0.5 * hi * hi)
    phi_diff = phi_lo * (-expm1(-2.0 * radius * m / v))
    dp_dm = -(radius / (s * m)) * (phi_lo + phi_hi) + (s / (m * m)) * phi_diff
    dp_ds = (-(lo * phi_lo + hi * phi_hi) / s - phi_diff / m
             - (lo * lo * phi_lo - hi * hi * phi_hi) / m)
    return dp_dm * (-m_dot_u / m) + dp_ds * (s / (2.0 * t))


cdef inline double _clamp01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef inline double _var_term(double a, double y, bint paper_mode) noexcept nogil:
    if paper_mode:
        return 0.5 * (a * y - a * y * y * (0.5 - 1.25 * a))
    return 0.5 * a * y * (1.0 - y) + 0.25 * a * a * y * y


cdef void _link_table(const double[::1] t, const double[::1] A, const double[:, ::1] w, double ux,
                      double uy, double uz, double omega, double radius, int memory,
                      bint paper_mode, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t r = t.shape[0]
    cdef Py_ssize_t s, j, q
    cdef int u
    cdef double frame = 0.0
    cdef double head, tail, mu0, var0, lam, y, p, span_a, span_b
    for s in range(r):
        frame += t[s]
    for s in range(r):
        head = 0.0
        for q in range(s + 1):
            head += t[q]
        mu0 = 0.0
        var0 = 0.0
        for u in range(1, memory + 1):
            for j in range(r):
                tail = 0.0
                for q in range(j, r):
                    tail += t[q]
                lam = (u - 1) * frame + tail + head
                y = _clamp01(
                    c_arrival_prob(w[j, 0], w[j, 1], w[j, 2], ux, uy, uz, omega, radius, lam)
                    - c_arrival_prob(w[s, 0], w[s, 1], w[s, 2], ux, uy, uz, omega, radius,
                                     lam - t[s]))
                mu0 += 0.5 * A[j] * y
                var0 += _var_term(A[j], y, paper_mode)
        for j in range(s):
            span_b = 0.0
            for q in range(j, s):
                span_b += t[q]
            span_a = span_b + t[s]
            y = _clamp01(
                c_arrival_prob(w[j, 0], w[j, 1], w[j, 2], ux, uy, uz, omega, radius, span_a)
                - c_arrival_prob(w[s, 0], w[s, 1], w[s, 2], ux, uy, uz, omega, radius, span_b))
            mu0 += 0.5 * A[j] * y
            var0 += _var_term(A[j], y, paper_mode)
        p = c_arrival_prob(w[s, 0], w[s, 1], w[s, 2], ux, uy, uz, omega, radius, t[s])
        out[s, 0] = mu0
        out[s, 1] = A[s] * p + mu0
        out[s, 2] = var0
        out[s, 3] = A[s] * p * (1.0 - p) + var0


def link_table(t, A, offsets, drift, double omega, double radius, int memory, bint paper_mode):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef const double[::1] dv = np.ascontiguousarray(drift, dtype=np.float64)
    out = np.empty((tv.shape[0], 4))
    cdef double[:, ::1] ov = out
    _link_table(tv, av, wv, dv[0], dv[1], dv[2], omega, radius, memory, paper_mode, ov)
    return out


cdef inline double c_ber_gauss(double mu0, double mu1, double var0, double var1,
                               double tau) noexcept nogil:
    # 0.5 + 0.25*(erf(x1) - erf(x0)) rewritten with erfc so small tails survive
    return 0.25 * (erfc((mu1 - tau) / sqrt(2.0 * var1))
                   + erfc((tau - mu0) / sqrt(2.0 * var0)))


def ber_gauss(double mu0, double mu1, double var0, double var1, double tau):
    return c_ber_gauss(mu0, mu1, var0, var1, tau)


cdef double c_ml_threshold(double mu0, double mu1, double var0, double var1,
                           bint* found) noexcept nogil:
    cdef double a = 1.0 / var0 - 1.0 / var1
    cdef double b = -2.0 * (mu0 / var0 - mu1 / var1)
    cdef double c = mu0 * mu0 / var0 - mu1 * mu1 / var1 + log(var0 / var1)
    cdef double span = mu1 - mu0
    cdef double tau = 0.0
    cdef double disc, sq, qq, root1, root2, lo, hi, x1, x2
    cdef bint have = False
    cdef int it
    if a == 0.0:
        tau = -c / b
        have = mu0 < tau < mu1
    else:
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            sq = sqrt(disc)
            qq = -0.5 * (b + copysign(sq, b))
            if qq != 0.0:
                root1 = qq / a
                root2 = c / qq
                if mu0 < root1 < mu1:
                    tau = root1
                    have = True
                elif mu0 < root2 < mu1:
                    tau = root2
                    have = True
            else:
                tau = -b / (2.0 * a)
                have = mu0 < tau < mu1
    if have:
        found[0] = True
        return tau
    found[0] = False
    lo = mu0
    hi = mu1
    for it in range(200):
        if hi - lo <= 1e-12 * span:
            break
        x1 = hi - INV_PHI * (hi - lo)
        x2 = lo + INV_PHI * (hi - lo)
        if c_ber_gauss(mu0, mu1, var0, var1, x1) <= c_ber_gauss(mu0, mu1, var0, var1, x2):
            hi = x2
        else:
            lo = x1
    return 0.5 * (lo + hi)


def ml_threshold(double mu0, double mu1, double var0, double var1):
    cdef bint found
    cdef double tau = c_ml_threshold(mu0, mu1, var0, var1, &found)
    return tau, bool(found)


cdef void _ber_table(const double[:, ::1] table, double var_floor, double[::1] taus,
                     double[::1] bers) noexcept nogil:
    cdef Py_ssize_t s
    cdef double mu0, mu1, var0, var1, tau
    cdef bint found
    for s in range(table.shape[0]):
        mu0 = table[s, 0]
        mu1 = table[s, 1]
        var0 = table[s, 2] if table[s, 2] > var_floor else var_floor
        var1 = table[s, 3] if table[s, 3] > var_floor else var_floor
        if mu1 <= mu0:
            taus[s] = mu0
            bers[s] = 0.5
            continue
        tau = c_ml_threshold(mu0, mu1, var0, var1, &found)
        taus[s] = tau
        bers[s] = c_ber_gauss(mu0, mu1, var0, var1, tau)


def ber_table(table, double var_floor):
    cdef const double[:, ::1] tv = np.ascontiguousarray(table, dtype=np.float64)
    taus = np.empty(tv.shape[0])
    bers = np.empty(tv.shape[0])
    _ber_table(tv, var_floor, taus, bers)
    return taus, bers


def mean_ber(t, A, offsets, drift, double omega, double radius, int memory,
             bint paper_mode, double var_floor):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef const double[::1] dv = np.ascontiguousarray(drift, dtype=np.float64)
    cdef Py_ssize_t r = tv.shape[0]
    cdef Py_ssize_t s
    cdef double total = 0.0
    table = np.empty((r, 4))
    taus = np.empty(r)
    bers = np.empty(r)
    cdef double[:, ::1] ov = table
    cdef double[::1] tauv = taus
    cdef double[::1] berv = bers
    _link_table(tv, av, wv, dv[0], dv[1], dv[2], omega, radius, memory, paper_mode, ov)
    _ber_table(ov, var_floor, tauv, berv)
    for s in range(r):
        total += berv[s]
    return total / r
