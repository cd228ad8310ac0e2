"""Monte Carlo oracle for arrival probabilities, reception moments and BER.

Frames are simulated molecule-by-molecule as Bernoulli draws (aggregated
into binomials): each release contributes to a later slot's count with the
probability that one of its molecules is inside the receiver at that slot's
end. Membership is re-drawn per observing slot, so per-slot marginals are
exact while cross-slot correlation of a single molecule is not modelled.

Two leak models are offered. ``modeled`` (the default) uses the clamped leak
probabilities of :mod:`mcvd.stats`, so the simulation shares the analytic
model's leak assumptions and checks its moment algebra and detector.
``occupancy`` uses the in-sphere probability at the elapsed time, which is
what a passive receiver physically sees.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mcvd import stats as _stats
from mcvd.channel import ChannelParams, NetworkLayout, arrival_probability
from mcvd.detection import VAR_FLOOR, floored, ml_threshold
from mcvd.errors import ConfigError, DomainError
from mcvd.stats import Allocation, LinkStats, Schedule

# frames per RNG stream; results do not depend on the worker count
CHUNK_FRAMES = 1 << 16


class Sampling(enum.Enum):
    EXACT_GAUSSIAN = "exact"
    EULER_MARUYAMA = "euler"


class LeakModel(enum.Enum):
    OCCUPANCY = "occupancy"
    MODELED = "modeled"


@dataclass(frozen=True)
class SimConfig:
    n_particles: int = 100_000
    n_frames: int = 100_000
    seed: int = 0
    U: int = 3
    U_warmup: Optional[int] = None
    sampling: Sampling = Sampling.EXACT_GAUSSIAN
    dt: Optional[float] = None
    leak_model: LeakModel = LeakModel.MODELED
    empirical_threshold: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        object.__setattr__(self, "leak_model", LeakModel(self.leak_model))
        if self.n_particles < 1 or self.n_frames < 1:
            raise ConfigError("n_particles and n_frames must be >= 1")
        if self.U < 0:
            raise ConfigError("memory U must be >= 0")
        if self.U_warmup is not None and self.U_warmup < 0:
            raise ConfigError("U_warmup must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.sampling is Sampling.EULER_MARUYAMA and not (self.dt is not None and self.dt > 0):
            raise ConfigError("EulerMaruyama sampling needs dt > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def warmup(self) -> int:
        return self.U if self.U_warmup is None else self.U_warmup


@dataclass(frozen=True)
class ArrivalEstimate:
    prob: float
    stderr: float
    n: int


@dataclass
class EmpiricalReport:
    mu0: np.ndarray
    mu1: np.ndarray
    var0: np.ndarray
    var1: np.ndarray
    mu0_se: np.ndarray
    mu1_se: np.ndarray
    var0_se: np.ndarray
    var1_se: np.ndarray
    thresholds: np.ndarray
    ber: np.ndarray
    ber_se: np.ndarray
    bit_counts: np.ndarray  # (r, 2): frames with bit 0 / bit 1
    errors: np.ndarray  # (r,)
    n_frames: int

    def link_stats(self, s: int) -> LinkStats:
        k = s - 1
        return LinkStats(float(self.mu0[k]), float(self.mu1[k]), float(self.var0[k]), float(self.var1[k]))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _positions(channel, source, t, cfg, rng, n):
    mean = np.asarray(source, float) + channel.drift * t
    if cfg.sampling is Sampling.EXACT_GAUSSIAN:
        return mean + math.sqrt(2.0 * channel.diffusion_coefficient * t) * rng.standard_normal((n, 3))
    steps = max(1, int(math.ceil(t / cfg.dt - 1e-9)))
    h = t / steps
    x = np.tile(np.asarray(source, float), (n, 1))
    scale = math.sqrt(2.0 * channel.diffusion_coefficient * h)
    for _ in range(steps):
        x += channel.drift * h + scale * rng.standard_normal((n, 3))
    return x


def simulate_arrival(channel: ChannelParams, source, t: float, cfg: SimConfig, stream: int = 0) -> ArrivalEstimate:
    """Fraction of ``n_particles`` released at ``source`` inside the receiver at ``t``."""
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"elapsed time must be positive, got {t!r}")
    rng = _rng(cfg.seed, 0, stream)
    inside = 0
    n = cfg.n_particles
    done = 0
    # bounded memory for large particle counts
    while done < n:
        k = min(n - done, 1 << 18)
        x = _positions(channel, source, t, cfg, rng, k)
        d2 = np.sum((x - channel.receiver_center) ** 2, axis=1)
        inside += int(np.count_nonzero(d2 <= channel.receiver_radius**2))
        done += k
    p = inside / n
    return ArrivalEstimate(p, math.sqrt(p * (1.0 - p) / n), n)


def _contributions(schedule, channel, layout, cfg):
    """Per observing slot: list of (tx index, frame lag, probability).

    Lag 0 is the current frame (own release and earlier slots of the
    same frame); lags 1..U are previous frames.
    """
    r = schedule.r
    t = schedule.slot_durations
    occupancy = cfg.leak_model is LeakModel.OCCUPANCY
    cache = {}

    def prob(j, elapsed):
        key = (j, float(elapsed))
        if key not in cache:
            if cfg.sampling is Sampling.EXACT_GAUSSIAN:
                cache[key] = arrival_probability(channel, layout.positions[j - 1], elapsed)
            else:
                est = simulate_arrival(channel, layout.positions[j - 1], elapsed, cfg, stream=len(cache) + 1)
                cache[key] = est.prob
        return cache[key]

    out = []
    for s in range(1, r + 1):
        terms = [(s, 0, prob(s, t[s - 1]))]
        for j in range(1, s):
            if occupancy:
                p = prob(j, float(t[j - 1 : s].sum()))
            else:
                p = _stats._intra(j, s, schedule, channel, layout)[0]
            terms.append((j, 0, p))
        for u in range(1, cfg.U + 1):
            for j in range(1, r + 1):
                if occupancy:
                    p = prob(j, _stats.slot_offset(u, j, s, schedule))
                else:
                    p = _stats._iui(u, j, s, schedule, channel, layout)[0]
                terms.append((j, u, p))
        out.append(terms)
    return out


def _chunk_counts(index, n, A, terms, cfg, r):
    """Bits (n, r) and slot counts (n, r) for one chunk of frames.

    Each chunk draws its own ``U`` frames of history, which play the role
    of the discarded warm-up frames; lags beyond ``cfg.warmup`` see no
    release.
    """
    rng = _rng(cfg.seed, 1, index)
    history = cfg.U
    bits = rng.integers(0, 2, size=(n + history, r), dtype=np.int64)
    counts = np.zeros((n, r), dtype=np.int64)
    for s in range(r):
        for j, u, p in terms[s]:
            if p <= 0.0 or A[j - 1] == 0 or u > cfg.warmup:
                continue
            trials = A[j - 1] * bits[history - u : history - u + n, j - 1]
            counts[:, s] += rng.binomial(trials, min(p, 1.0))
    return bits[history:], counts


# consecutive frames share leaked bits, so standard errors use batch means
SE_BATCH = 1024
SE_MIN_BATCHES = 30


def _batch_se(x):
    """Standard error of the mean of a serially correlated sequence."""
    n = x.size
    b = min(SE_BATCH, n // SE_MIN_BATCHES)
    if b < 2:
        return math.sqrt(float(np.var(x)) / n) if n > 1 else math.nan
    k = n // b
    means = x[: k * b].reshape(k, b).mean(axis=1)
    return math.sqrt(float(np.var(means, ddof=1)) / k)


def _moment_se(x):
    """Sample mean, variance and their batch-means standard errors."""
    n = x.size
    if n < 2:
        return float(x.mean()) if n else math.nan, math.nan, math.nan, math.nan
    x = x.astype(float)
    mean = float(x.mean())
    d = x - mean
    var = float(np.mean(d * d)) * n / (n - 1)
    return mean, var, _batch_se(x), _batch_se(d * d)


def _empirical_threshold(y0, y1):
    """Integer threshold minimising 0.5*(P(y1 < tau) + P(y0 >= tau)), deciding 1 when y >= tau."""
    hi = int(max(y0.max(initial=0), y1.max(initial=0))) + 2
    h0 = np.bincount(y0, minlength=hi)[:hi] / max(y0.size, 1)
    h1 = np.bincount(y1, minlength=hi)[:hi] / max(y1.size, 1)
    miss = np.concatenate(([0.0], np.cumsum(h1)))[:hi]
    false = 1.0 - np.concatenate(([0.0], np.cumsum(h0)))[:hi]
    err = 0.5 * (miss + false)
    k = int(np.argmin(err))
    # midpoint between k-1 and k so the rule matches y > tau
    return k - 0.5


def simulate_frames(
    schedule: Schedule,
    allocation: Allocation,
    channel: ChannelParams,
    layout: NetworkLayout,
    cfg: SimConfig,
    mode=_stats.MomentMode.CORRECTED_MIXTURE,
    thresholds=None,
    var_floor: float = VAR_FLOOR,
) -> EmpiricalReport:
    """Simulate ``n_frames`` frames of random equiprobable bits and detect them.

    A slot decides '1' when its count exceeds the threshold. Thresholds are,
    in order of precedence: the ``thresholds`` argument, the empirical
    optimum (``cfg.empirical_threshold``), or the ML threshold of the
    analytic statistics in moment mode ``mode``. A slot whose analytic
    statistics carry no signal always decides '0'. Releases older than
    ``cfg.warmup`` frames are absent, matching a network that switched on
    that many frames ago.
    """
    r = schedule.r
    if not (allocation.r == r == layout.r):
        raise DomainError("schedule, allocation and layout disagree on r")
    A = np.rint(allocation.molecules).astype(np.int64)
    if not np.allclose(A, allocation.molecules, rtol=0, atol=1e-9):
        raise DomainError("simulation needs integer molecule counts")
    terms = _contributions(schedule, channel, layout, cfg)

    n = cfg.n_frames
    sizes = [min(CHUNK_FRAMES, n - k) for k in range(0, n, CHUNK_FRAMES)]
    workers = min(cfg.workers, len(sizes))
    job = lambda i: _chunk_counts(i, sizes[i], A, terms, cfg, r)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    bits = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])

    mu = np.zeros((2, r))
    var = np.zeros((2, r))
    mu_se = np.zeros((2, r))
    var_se = np.zeros((2, r))
    bit_counts = np.zeros((r, 2), dtype=np.int64)
    taus = np.full(r, math.inf)
    errors = np.zeros(r, dtype=np.int64)
    ber_se = np.zeros(r)
    for s in range(r):
        cls = [counts[bits[:, s] == b, s] for b in (0, 1)]
        for b in (0, 1):
            bit_counts[s, b] = cls[b].size
            mu[b, s], var[b, s], mu_se[b, s], var_se[b, s] = _moment_se(cls[b])
        if thresholds is not None:
            taus[s] = float(thresholds[s])
        elif cfg.empirical_threshold:
            taus[s] = _empirical_threshold(cls[0], cls[1])
        else:
            st = floored(_stats.link_stats(s + 1, schedule, allocation, channel, layout, cfg.U, mode), var_floor)
            if st.mu1 > st.mu0:
                taus[s] = ml_threshold(st)
        decide = counts[:, s] > taus[s]
        wrong = decide != (bits[:, s] == 1)
        errors[s] = int(np.count_nonzero(wrong))
        ber_se[s] = _batch_se(wrong.astype(float))
    ber = errors / n
    return EmpiricalReport(
        mu0=mu[0],
        mu1=mu[1],
        var0=var[0],
        var1=var[1],
        mu0_se=mu_se[0],
        mu1_se=mu_se[1],
        var0_se=var_se[0],
        var1_se=var_se[1],
        thresholds=taus,
        ber=ber,
        ber_se=ber_se,
        bit_counts=bit_counts,
        errors=errors,
        n_frames=n,
    )


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("MCVD_THREADS", "1")))
    except ValueError:
        raise ConfigError("MCVD_THREADS must be an integer") from None
