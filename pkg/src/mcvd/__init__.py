"""Time-slotted molecular communication via drifted diffusion.

Arrival probabilities, interference statistics, threshold detection,
release scheduling optimizers and a Monte Carlo cross-check.
"""

from mcvd._backend import NAME as BACKEND
from mcvd.channel import (
    ChannelParams,
    FluidProps,
    MediumScenario,
    NetworkLayout,
    arrival_probability,
    arrival_probability_derivative,
)
from mcvd.detection import ber, ber_vector, ml_threshold
from mcvd.errors import ConfigError, DomainError, InfeasibleError, McvdError, NumericError
from mcvd.optimizer import Bounds, LinkModel, SchemeKind, SolverConfig, Solution, solve, solve_all
from mcvd.simulator import SimConfig, simulate_arrival, simulate_frames
from mcvd.stats import Allocation, LinkStats, MomentMode, Schedule, link_stats

__version__ = "0.1.0"
