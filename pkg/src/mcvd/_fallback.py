"""Pure-Python numerical core.

Mirrors ``mcvd._kernels`` function for function. The package imports the
compiled module when it is available and falls back to this one otherwise,
so both must stay numerically interchangeable (see tests/test_backend.py).
"""

import math

import numpy as np

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# Offset below which the sphere-Gaussian closed form switches to its
# even Taylor expansion in the offset (relative to the per-axis spread).
SERIES_OFFSET = 1e-3
# Below this value of radius/sqrt(2*var) the centred term uses its own series.
SERIES_CENTRED = 1e-2
# Receivers smaller than this fraction of the spread (with the plume centre
# within FAR_OFFSET spreads) are integrated radially; the closed form cancels.
SMALL_RECEIVER = 0.1
FAR_OFFSET = 10.0
GL_NODES, GL_WEIGHTS = (x.tolist() for x in np.polynomial.legendre.leggauss(32))


def _centred(a, v):
    """P0 at zero offset and the m**2, m**4 Taylor coefficients."""
    if a < SERIES_CENTRED:
        a2 = a * a
        p0 = 4.0 / (3.0 * SQRT_PI) * a * a2 * (1.0 - 0.6 * a2 + 3.0 / 14.0 * a2 * a2)
    else:
        p0 = math.erf(a) - 2.0 / SQRT_PI * a * math.exp(-a * a)
    g = math.exp(-a * a) * a ** 3
    c2 = -2.0 / (3.0 * SQRT_PI) * g / v
    c4 = g * (2.5 - a * a) / (15.0 * SQRT_PI * v * v)
    return p0, c2, c4


def _radial_gl(m, s, radius):
    """Shell-averaged Gaussian integrated over [0, radius] by Gauss-Legendre."""
    v = s * s
    half = 0.5 * radius
    total = 0.0
    for x, wgt in zip(GL_NODES, GL_WEIGHTS):
        r = half * (x + 1.0)
        if m > 0.0:
            shell = -math.expm1(-2.0 * r * m / v) / m
        else:
            shell = 2.0 * r / v
        total += wgt * r * shell * math.exp(-0.5 * (r - m) * (r - m) / v)
    return total * half * INV_SQRT_2PI / s


def arrival_prob(wx, wy, wz, ux, uy, uz, omega, radius, t):
    """Probability that a molecule is inside the receiver sphere after ``t``.

    ``w`` is the receiver centre minus the release point; the Gaussian plume
    is centred at ``u*t`` with per-axis variance ``2*omega*t``.
    """
    mx = wx - ux * t
    my = wy - uy * t
    mz = wz - uz * t
    m = math.sqrt(mx * mx + my * my + mz * mz)
    v = 2.0 * omega * t
    s = math.sqrt(v)
    if radius < SMALL_RECEIVER * s and m < FAR_OFFSET * s:
        p = _radial_gl(m, s, radius)
    elif m < SERIES_OFFSET * s:
        p0, c2, c4 = _centred(radius / (SQRT2 * s), v)
        m2 = m * m
        p = p0 + c2 * m2 + c4 * m2 * m2
    else:
        lo = (radius - m) / s
        hi = (radius + m) / s
        if lo >= 0.0:
            core = 1.0 - 0.5 * math.erfc(lo / SQRT2) - 0.5 * math.erfc(hi / SQRT2)
        else:
            core = 0.5 * math.erfc(-lo / SQRT2) - 0.5 * math.erfc(hi / SQRT2)
        shell = (s / m) * INV_SQRT_2PI * math.exp(-0.5 * lo * lo) * (
            -math.expm1(-2.0 * radius * m / v)
        )
        p = core - shell
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


def arrival_prob_dt(wx, wy, wz, ux, uy, uz, omega, radius, t):
    """Time derivative of :func:`arrival_prob` (analytic, 1/s)."""
    mx = wx - ux * t
    my = wy - uy * t
    mz = wz - uz * t
    m = math.sqrt(mx * mx + my * my + mz * mz)
    v = 2.0 * omega * t
    s = math.sqrt(v)
    # d|m|/dt * |m| = -(m . u)
    m_dot_u = mx * ux + my * uy + mz * uz
    if m < SERIES_OFFSET * s:
        _, c2, c4 = _centred(radius / (SQRT2 * s), v)
        m2 = m * m
        return -(2.0 * c2 + 4.0 * c4 * m2) * m_dot_u + (3.0 * c2 + 10.0 * c4 * m2) * 2.0 * omega
    lo = (radius - m) / s
    hi = (radius + m) / s
    phi_lo = INV_SQRT_2PI * math.exp(-0.5 * lo * lo)
    phi_hi = INV_SQRT_2PI * math.exp(-0.5 * hi * hi)
    phi_diff = phi_lo * (-math.expm1(-2.0 * radius * m / v))
    dp_dm = -(radius / (s * m)) * (phi_lo + phi_hi) + (s / (m * m)) * phi_diff
    dp_ds = (
        -(lo * phi_lo + hi * phi_hi) / s
        - phi_diff / m
        - (lo * lo * phi_lo - hi * hi * phi_hi) / m
    )
    return dp_dm * (-m_dot_u / m) + dp_ds * (s / (2.0 * t))


def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


def link_table(t, A, offsets, drift, omega, radius, memory, paper_mode):
    """Per-transmitter (mu0, mu1, var0, var1) for slot durations ``t``.

    ``offsets[s]`` is receiver centre minus transmitter ``s``; slots run in
    row order. ``paper_mode`` selects the published variance algebra,
    otherwise the exact Bernoulli-mixture variance is used.
    """
    r = len(t)
    ux, uy, uz = float(drift[0]), float(drift[1]), float(drift[2])
    w = [(float(o[0]), float(o[1]), float(o[2])) for o in offsets]
    tt = [float(x) for x in t]
    aa = [float(x) for x in A]
    frame = sum(tt)
    out = np.empty((r, 4))

    def ph(k, dt):
        return arrival_prob(w[k][0], w[k][1], w[k][2], ux, uy, uz, omega, radius, dt)

    def var_term(a, y):
        if paper_mode:
            return 0.5 * (a * y - a * y * y * (0.5 - 1.25 * a))
        return 0.5 * a * y * (1.0 - y) + 0.25 * a * a * y * y

    for s in range(r):
        head = sum(tt[: s + 1])
        mu0 = 0.0
        var0 = 0.0
        for u in range(1, memory + 1):
            for j in range(r):
                lam = (u - 1) * frame + sum(tt[j:]) + head
                y = _clamp01(ph(j, lam) - ph(s, lam - tt[s]))
                mu0 += 0.5 * aa[j] * y
                var0 += var_term(aa[j], y)
        for j in range(s):
            h = _clamp01(ph(j, sum(tt[j : s + 1])) - ph(s, sum(tt[j:s])))
            mu0 += 0.5 * aa[j] * h
            var0 += var_term(aa[j], h)
        p = ph(s, tt[s])
        out[s, 0] = mu0
        out[s, 1] = aa[s] * p + mu0
        out[s, 2] = var0
        out[s, 3] = aa[s] * p * (1.0 - p) + var0
    return out


def ber_gauss(mu0, mu1, var0, var1, tau):
    # 0.5 + 0.25*(erf(x1) - erf(x0)) rewritten with erfc so small tails survive
    return 0.25 * (
        math.erfc((mu1 - tau) / math.sqrt(2.0 * var1))
        + math.erfc((tau - mu0) / math.sqrt(2.0 * var0))
    )


def ml_threshold(mu0, mu1, var0, var1):
    """Crossing of the two Gaussian likelihoods between the means.

    Returns ``(tau, found)``; ``found`` is false when no crossing lies in
    (mu0, mu1) and the returned value is the Gaussian-BER minimiser there.
    """
    a = 1.0 / var0 - 1.0 / var1
    b = -2.0 * (mu0 / var0 - mu1 / var1)
    c = mu0 * mu0 / var0 - mu1 * mu1 / var1 + math.log(var0 / var1)
    span = mu1 - mu0
    if a == 0.0:
        tau = -c / b
    else:
        disc = b * b - 4.0 * a * c
        tau = math.nan
        if disc >= 0.0:
            sq = math.sqrt(disc)
            # stable pair of roots
            q = -0.5 * (b + math.copysign(sq, b))
            roots = [q / a, c / q] if q != 0.0 else [-b / (2.0 * a)]
            for root in roots:
                if mu0 < root < mu1:
                    tau = root
                    break
    if mu0 < tau < mu1:
        return tau, True
    lo, hi = mu0, mu1
    for _ in range(200):
        if hi - lo <= 1e-12 * span:
            break
        x1 = hi - INV_PHI * (hi - lo)
        x2 = lo + INV_PHI * (hi - lo)
        if ber_gauss(mu0, mu1, var0, var1, x1) <= ber_gauss(mu0, mu1, var0, var1, x2):
            hi = x2
        else:
            lo = x1
    return 0.5 * (lo + hi), False


def ber_table(table, var_floor):
    """(tau, ber) per row of a ``link_table`` result."""
    r = table.shape[0]
    taus = np.empty(r)
    bers = np.empty(r)
    for s in range(r):
        mu0, mu1, var0, var1 = table[s]
        var0 = max(var0, var_floor)
        var1 = max(var1, var_floor)
        if mu1 <= mu0:
            taus[s] = mu0
            bers[s] = 0.5
            continue
        tau, _ = ml_threshold(mu0, mu1, var0, var1)
        taus[s] = tau
        bers[s] = ber_gauss(mu0, mu1, var0, var1, tau)
    return taus, bers


def mean_ber(t, A, offsets, drift, omega, radius, memory, paper_mode, var_floor):
    table = link_table(t, A, offsets, drift, omega, radius, memory, paper_mode)
    _, bers = ber_table(table, var_floor)
    return float(np.mean(bers))
