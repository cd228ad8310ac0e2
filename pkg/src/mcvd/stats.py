"""Reception statistics with inter-user / inter-symbol interference.

Transmitter and frame indices in the public functions are 1-based, matching
how slots are usually numbered when talking about a frame (TX-1 owns the
first slot). Leak probabilities are evaluated exactly as the interference
model writes them, then clamped into [0, 1].
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from mcvd._backend import kernels
from mcvd.channel import ChannelParams, NetworkLayout, arrival_probability
from mcvd.errors import DomainError

logger = logging.getLogger(__name__)


class MomentMode(enum.Enum):
    """Variance algebra for the interference terms.

    ``PAPER_EXACT`` reproduces the published expression for the variance of a
    bit-gated binomial leak; ``CORRECTED_MIXTURE`` is the exact variance of a
    0.5/0.5 mixture of 0 and Binomial(A, Y).
    """

    PAPER_EXACT = "paper"
    CORRECTED_MIXTURE = "corrected"

    @classmethod
    def parse(cls, value) -> "MomentMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"moment mode must be 'paper' or 'corrected', got {value!r}") from None


@dataclass(frozen=True)
class Schedule:
    slot_durations: np.ndarray

    def __post_init__(self):
        t = np.array(self.slot_durations, dtype=float).reshape(-1)
        if t.size < 1 or not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise DomainError(f"slot durations must be positive, got {self.slot_durations!r}")
        t.setflags(write=False)
        object.__setattr__(self, "slot_durations", t)

    @property
    def r(self) -> int:
        return self.slot_durations.size

    @property
    def frame_length(self) -> float:
        return float(self.slot_durations.sum())

    @classmethod
    def uniform(cls, frame: float, r: int) -> "Schedule":
        return cls(np.full(r, frame / r))


@dataclass(frozen=True)
class Allocation:
    """Molecules released per transmitter for bit '1' (real-valued)."""

    molecules: np.ndarray

    def __post_init__(self):
        a = np.array(self.molecules, dtype=float).reshape(-1)
        if a.size < 1 or not np.all(np.isfinite(a)) or np.any(a < 0):
            raise DomainError(f"molecule counts must be non-negative, got {self.molecules!r}")
        a.setflags(write=False)
        object.__setattr__(self, "molecules", a)

    @property
    def r(self) -> int:
        return self.molecules.size

    @classmethod
    def uniform(cls, budget: float, r: int) -> "Allocation":
        return cls(np.full(r, budget / r))


@dataclass(frozen=True)
class LinkStats:
    mu0: float
    mu1: float
    var0: float
    var1: float

    def as_tuple(self):
        return (self.mu0, self.mu1, self.var0, self.var1)


def _check_index(name, value, r):
    if not (1 <= value <= r):
        raise DomainError(f"{name}={value} outside 1..{r}")


def slot_offset(u: int, j: int, s: int, schedule: Schedule) -> float:
    """Time from TX-j's release ``u`` frames back to the end of slot ``s``."""
    r = schedule.r
    if u < 1:
        raise DomainError(f"frame lag u must be >= 1, got {u}")
    _check_index("j", j, r)
    _check_index("s", s, r)
    t = schedule.slot_durations
    return float((u - 1) * schedule.frame_length + t[j - 1 :].sum() + t[:s].sum())


def _clamped(value, what):
    if value < 0.0:
        logger.debug("%s = %.3e < 0 clamped to 0", what, value)
        return 0.0, True
    if value > 1.0:
        return 1.0, True
    return value, False


def _ph(channel, layout, k, t):
    return arrival_probability(channel, layout.positions[k - 1], t)


def _iui(u, j, s, schedule, channel, layout):
    lam = slot_offset(u, j, s, schedule)
    ts = schedule.slot_durations[s - 1]
    if not lam - ts > 0:
        raise DomainError("lambda - t_s must be positive")
    raw = _ph(channel, layout, j, lam) - _ph(channel, layout, s, lam - ts)
    return _clamped(raw, f"Y^{u}_{j},{s}")


def _intra(j, s, schedule, channel, layout):
    r = schedule.r
    _check_index("j", j, r)
    _check_index("s", s, r)
    if not j < s:
        raise DomainError(f"intra-frame leak needs j < s, got j={j}, s={s}")
    t = schedule.slot_durations
    raw = _ph(channel, layout, j, float(t[j - 1 : s].sum())) - _ph(
        channel, layout, s, float(t[j - 1 : s - 1].sum())
    )
    return _clamped(raw, f"H_{j},{s}")


def iui_leak_prob(u, j, s, schedule: Schedule, channel: ChannelParams, layout: NetworkLayout) -> float:
    """Leak probability Y from TX-j, ``u`` frames back, into slot ``s``."""
    value, clamped = _iui(u, j, s, schedule, channel, layout)
    if clamped:
        logger.warning("leak probability Y^%d_%d,%d clamped into [0, 1]", u, j, s)
    return value


def intra_frame_leak_prob(j, s, schedule: Schedule, channel: ChannelParams, layout: NetworkLayout) -> float:
    """Leak probability H from an earlier slot ``j`` of the same frame into slot ``s``."""
    value, clamped = _intra(j, s, schedule, channel, layout)
    if clamped:
        logger.warning("leak probability H_%d,%d clamped into [0, 1]", j, s)
    return value


def leak_variance(a: float, y: float, mode: MomentMode) -> float:
    """Variance contributed by one bit-gated leak term of ``a`` molecules."""
    if mode is MomentMode.PAPER_EXACT:
        return 0.5 * (a * y - a * y * y * (0.5 - 1.25 * a))
    return 0.5 * a * y * (1.0 - y) + 0.25 * a * a * y * y


def _check_shapes(schedule, allocation, layout):
    if not (schedule.r == allocation.r == layout.r):
        raise DomainError(
            f"schedule ({schedule.r}), allocation ({allocation.r}) and layout ({layout.r}) disagree on r"
        )


def link_stats(
    s: int,
    schedule: Schedule,
    allocation: Allocation,
    channel: ChannelParams,
    layout: NetworkLayout,
    U: int,
    mode: MomentMode = MomentMode.PAPER_EXACT,
) -> LinkStats:
    """Gaussian reception statistics for the slot of TX-``s``."""
    _check_shapes(schedule, allocation, layout)
    _check_index("s", s, schedule.r)
    if U < 0:
        raise DomainError(f"memory length U must be >= 0, got {U}")
    mode = MomentMode.parse(mode)
    A = allocation.molecules
    mu0 = 0.0
    var0 = 0.0
    n_clamped = 0
    terms = [(A[j - 1], _iui(u, j, s, schedule, channel, layout)) for u in range(1, U + 1) for j in range(1, schedule.r + 1)]
    terms += [(A[j - 1], _intra(j, s, schedule, channel, layout)) for j in range(1, s)]
    for a, (y, clamped) in terms:
        n_clamped += clamped
        mu0 += 0.5 * a * y
        var0 += leak_variance(a, y, mode)
    if n_clamped:
        logger.warning("TX-%d: %d leak probabilities clamped into [0, 1]", s, n_clamped)
    p = _ph(channel, layout, s, schedule.slot_durations[s - 1])
    own = A[s - 1]
    return LinkStats(mu0, own * p + mu0, var0, own * p * (1.0 - p) + var0)


def link_table(
    schedule: Schedule,
    allocation: Allocation,
    channel: ChannelParams,
    layout: NetworkLayout,
    U: int,
    mode: MomentMode = MomentMode.PAPER_EXACT,
) -> np.ndarray:
    """All transmitters' (mu0, mu1, var0, var1) at once via the fast kernel, shape (r, 4)."""
    _check_shapes(schedule, allocation, layout)
    if U < 0:
        raise DomainError(f"memory length U must be >= 0, got {U}")
    mode = MomentMode.parse(mode)
    return kernels.link_table(
        schedule.slot_durations,
        allocation.molecules,
        layout.offsets(channel),
        channel.drift,
        channel.diffusion_coefficient,
        channel.receiver_radius,
        int(U),
        mode is MomentMode.PAPER_EXACT,
    )
