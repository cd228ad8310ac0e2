"""Analytic gradient of the scalarized BER in the slot durations and allocation.

Pure Python and slow; it exists to verify the derivative-free solvers.
Clamped leak probabilities and floored variances contribute zero
derivative. The ML threshold moves with the statistics through the
implicit function theorem applied to the likelihood-equality condition;
when the threshold comes from the BER-minimising fallback its derivative
drops out because the BER is stationary in it.
"""

from __future__ import annotations

import math

import numpy as np

from mcvd._backend import kernels
from mcvd.channel import arrival_probability, arrival_probability_derivative
from mcvd.detection import VAR_FLOOR
from mcvd.stats import MomentMode, Schedule

_SQRT_PI = math.sqrt(math.pi)


def _leak_var_partials(a, y, mode):
    """(d var / d y, d var / d a) for one leak term."""
    if mode is MomentMode.PAPER_EXACT:
        return 0.5 * (a - 2.0 * a * y * (0.5 - 1.25 * a)), 0.5 * (y - y * y * (0.5 - 2.5 * a))
    return 0.5 * a * (1.0 - 2.0 * y) + 0.5 * a * a * y, 0.5 * y * (1.0 - y) + 0.5 * a * y * y


def _slot_terms(s, t, model):
    """Leak terms of slot ``s`` (0-based): (tx, y, dy/dt) with clamping applied."""
    r = t.size
    T = t.sum()
    ch, pos = model.channel, model.layout.positions

    def pd(k, elapsed):
        return arrival_probability(ch, pos[k], elapsed), arrival_probability_derivative(ch, pos[k], elapsed)

    q = np.arange(r)
    terms = []
    for u in range(1, model.U + 1):
        for j in range(r):
            lam = (u - 1) * T + t[j:].sum() + t[: s + 1].sum()
            dlam = (u - 1) + (q >= j) + (q <= s)
            pj, dpj = pd(j, lam)
            ps, dps = pd(s, lam - t[s])
            raw = pj - ps
            dy = dpj * dlam - dps * (dlam - (q == s))
            terms.append((j, raw, dy))
    for j in range(s):
        pj, dpj = pd(j, t[j : s + 1].sum())
        ps, dps = pd(s, t[j:s].sum())
        dy = dpj * ((q >= j) & (q <= s)) - dps * ((q >= j) & (q <= s - 1))
        terms.append((j, pj - ps, dy))
    out = []
    for j, raw, dy in terms:
        if raw < 0.0 or raw > 1.0:
            out.append((j, min(max(raw, 0.0), 1.0), np.zeros(r)))
        else:
            out.append((j, raw, dy.astype(float)))
    return out


def _ber_partials(mu0, mu1, v0, v1, tau, found):
    """BER and its partials in (mu0, mu1, v0, v1) including the threshold's motion."""
    a0 = (tau - mu0) / math.sqrt(2.0 * v0)
    a1 = (tau - mu1) / math.sqrt(2.0 * v1)
    e0 = math.exp(-a0 * a0) / _SQRT_PI
    e1 = math.exp(-a1 * a1) / _SQRT_PI
    ber = 0.25 * (math.erfc(-a1) + math.erfc(a0))
    # erf'(a) = 2 e^{-a^2} / sqrt(pi)
    d_tau = 0.5 * (e1 / math.sqrt(2.0 * v1) - e0 / math.sqrt(2.0 * v0))
    grad = np.array([
        0.5 * e0 / math.sqrt(2.0 * v0),
        -0.5 * e1 / math.sqrt(2.0 * v1),
        0.5 * e0 * a0 / (2.0 * v0),
        -0.5 * e1 * a1 / (2.0 * v1),
    ])
    if found:
        f_tau = 2.0 * (tau - mu0) / v0 - 2.0 * (tau - mu1) / v1
        f_theta = np.array([
            -2.0 * (tau - mu0) / v0,
            2.0 * (tau - mu1) / v1,
            1.0 / v0 - (tau - mu0) ** 2 / v0**2,
            (tau - mu1) ** 2 / v1**2 - 1.0 / v1,
        ])
        if f_tau != 0.0:
            grad = grad + d_tau * (-f_theta / f_tau)
    return ber, grad


def objective_gradient(model, t, A, var_floor: float = VAR_FLOOR):
    """(G, dG/dt, dG/dA) for the model's scalarized BER."""
    t = Schedule(t).slot_durations.astype(float)
    A = np.asarray(A, dtype=float)
    r = t.size
    mode = model.mode
    G = 0.0
    gt = np.zeros(r)
    gA = np.zeros(r)
    for s in range(r):
        mu0 = var0 = 0.0
        dmu0_t = np.zeros(r)
        dvar0_t = np.zeros(r)
        dmu0_A = np.zeros(r)
        dvar0_A = np.zeros(r)
        for j, y, dy in _slot_terms(s, t, model):
            a = A[j]
            mu0 += 0.5 * a * y
            dmu0_t += 0.5 * a * dy
            dmu0_A[j] += 0.5 * y
            if mode is MomentMode.PAPER_EXACT:
                var0 += 0.5 * (a * y - a * y * y * (0.5 - 1.25 * a))
            else:
                var0 += 0.5 * a * y * (1.0 - y) + 0.25 * a * a * y * y
            vy, va = _leak_var_partials(a, y, mode)
            dvar0_t += vy * dy
            dvar0_A[j] += va
        p = arrival_probability(model.channel, model.layout.positions[s], t[s])
        dp = np.zeros(r)
        dp[s] = arrival_probability_derivative(model.channel, model.layout.positions[s], t[s])
        mu1 = A[s] * p + mu0
        var1 = A[s] * p * (1.0 - p) + var0
        dmu1_t = A[s] * dp + dmu0_t
        dvar1_t = A[s] * (1.0 - 2.0 * p) * dp + dvar0_t
        dmu1_A = dmu0_A.copy()
        dmu1_A[s] += p
        dvar1_A = dvar0_A.copy()
        dvar1_A[s] += p * (1.0 - p)
        if var0 < var_floor:
            var0, dvar0_t, dvar0_A = var_floor, 0.0 * dvar0_t, 0.0 * dvar0_A
        if var1 < var_floor:
            var1, dvar1_t, dvar1_A = var_floor, 0.0 * dvar1_t, 0.0 * dvar1_A
        if not mu1 > mu0:
            G += 0.5
            continue
        tau, found = kernels.ml_threshold(mu0, mu1, var0, var1)
        ber, g = _ber_partials(mu0, mu1, var0, var1, tau, found)
        G += ber
        gt += g[0] * dmu0_t + g[1] * dmu1_t + g[2] * dvar0_t + g[3] * dvar1_t
        gA += g[0] * dmu0_A + g[1] * dmu1_A + g[2] * dvar0_A + g[3] * dvar1_A
    return G / r, gt / r, gA / r
