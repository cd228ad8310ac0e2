"""Maximum-likelihood thresholds and Gaussian bit-error rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mcvd._backend import kernels
from mcvd.channel import ChannelParams, NetworkLayout
from mcvd.errors import DomainError
from mcvd.stats import Allocation, LinkStats, MomentMode, Schedule, link_stats

# Variances below this (molecules^2) are raised to it before detection. An
# interference-free slot has exactly zero variance under bit 0.
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class ThresholdedLink:
    stats: LinkStats
    tau: float

    def __post_init__(self):
        if not self.stats.mu0 < self.tau < self.stats.mu1:
            raise DomainError("threshold must lie strictly between mu0 and mu1")


def floored(stats: LinkStats, var_floor: float = VAR_FLOOR) -> LinkStats:
    return LinkStats(stats.mu0, stats.mu1, max(stats.var0, var_floor), max(stats.var1, var_floor))


def ml_threshold(stats: LinkStats) -> float:
    """Threshold where the two Gaussian likelihoods cross between the means.

    When no crossing falls inside (mu0, mu1), which needs a mean separation
    below one molecule, the minimiser of the Gaussian BER on that interval is
    returned instead.
    """
    mu0, mu1, var0, var1 = stats.as_tuple()
    if not mu1 > mu0:
        raise DomainError(f"need mu1 > mu0, got mu0={mu0}, mu1={mu1}")
    if not (var0 > 0 and var1 > 0):
        raise DomainError("variances must be positive")
    tau, _ = kernels.ml_threshold(mu0, mu1, var0, var1)
    return tau


def ber(stats: LinkStats, tau: float) -> float:
    """Error probability of a threshold detector with equiprobable bits."""
    mu0, mu1, var0, var1 = stats.as_tuple()
    if not (var0 > 0 and var1 > 0):
        raise DomainError("variances must be positive")
    # same value as 0.5 + 0.25*(erf((tau-mu1)/s1) - erf((tau-mu0)/s0)), without cancellation
    return 0.25 * (
        math.erfc((mu1 - tau) / math.sqrt(2.0 * var1)) + math.erfc((tau - mu0) / math.sqrt(2.0 * var0))
    )


def threshold_link(stats: LinkStats, var_floor: float = VAR_FLOOR) -> ThresholdedLink:
    st = floored(stats, var_floor)
    return ThresholdedLink(st, ml_threshold(st))


def ber_vector(
    schedule: Schedule,
    allocation: Allocation,
    channel: ChannelParams,
    layout: NetworkLayout,
    U: int,
    mode: MomentMode = MomentMode.PAPER_EXACT,
    var_floor: float = VAR_FLOOR,
) -> np.ndarray:
    """Per-transmitter BER: statistics, then ML threshold, then error rate."""
    out = np.empty(schedule.r)
    for s in range(1, schedule.r + 1):
        st = floored(link_stats(s, schedule, allocation, channel, layout, U, mode), var_floor)
        if st.mu1 <= st.mu0:
            # no signal: deciding '0' always is as good as any threshold
            out[s - 1] = 0.5
            continue
        out[s - 1] = ber(st, ml_threshold(st))
    return out
