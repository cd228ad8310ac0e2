"""Drifted-diffusion channel: arrival probability at a passive spherical receiver.

A molecule released at ``source`` at time zero is, after ``t`` seconds,
Gaussian-distributed around ``source + u*t`` with per-axis variance
``2*omega*t``. The arrival probability is the mass of that Gaussian inside
the receiver ball. All quantities are SI.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from mcvd._backend import kernels
from mcvd.errors import DomainError, NumericError

logger = logging.getLogger(__name__)

TURBULENT_REYNOLDS = 2100.0


@dataclass(frozen=True)
class FluidProps:
    boltzmann_constant: float = 1.380649e-23
    temperature: float = 310.0
    dynamic_viscosity: float = 1e-3
    stokes_radius: float = 1e-9
    kinematic_viscosity: float = 1e-6

    def __post_init__(self):
        for name in (
            "boltzmann_constant",
            "temperature",
            "dynamic_viscosity",
            "stokes_radius",
            "kinematic_viscosity",
        ):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive, got {value!r}")


class MediumScenario(enum.Enum):
    """Diffusive environments and their diffusion coefficients (m^2/s)."""

    MDE = "MDE"
    MODE = "MODE"
    SDE = "SDE"

    @property
    def diffusion_coefficient(self) -> float:
        return _SCENARIO_OMEGA[self]

    @classmethod
    def parse(cls, name: str) -> "MediumScenario":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DomainError(f"unknown scenario {name!r}; expected MDE, MODE or SDE") from None


_SCENARIO_OMEGA = {
    MediumScenario.MDE: 3.7e-9,
    MediumScenario.MODE: 4.5e-9,
    MediumScenario.SDE: 4.87e-9,
}


def _vec3(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be a finite 3-vector, got {value!r}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ChannelParams:
    diffusion_coefficient: float
    drift: np.ndarray
    receiver_center: np.ndarray
    receiver_radius: float

    def __post_init__(self):
        if not self.diffusion_coefficient > 0:
            raise DomainError("diffusion coefficient must be positive")
        if not self.receiver_radius > 0:
            raise DomainError("receiver radius must be positive")
        object.__setattr__(self, "drift", _vec3(self.drift, "drift"))
        object.__setattr__(self, "receiver_center", _vec3(self.receiver_center, "receiver_center"))

    def with_diffusion(self, omega: float) -> "ChannelParams":
        return ChannelParams(omega, self.drift, self.receiver_center, self.receiver_radius)

    @classmethod
    def for_scenario(cls, scenario: MediumScenario, drift, receiver_center, receiver_radius):
        return cls(scenario.diffusion_coefficient, drift, receiver_center, receiver_radius)


@dataclass(frozen=True)
class NetworkLayout:
    """Transmitter positions in activation (slot) order."""

    positions: np.ndarray = field()

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise DomainError("positions must be an (r, 3) array with r >= 1")
        if not np.all(np.isfinite(pos)):
            raise DomainError("positions must be finite")
        if len({tuple(p) for p in pos}) != len(pos):
            raise DomainError("transmitter positions must be distinct")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def r(self) -> int:
        return self.positions.shape[0]

    def offsets(self, params: ChannelParams) -> np.ndarray:
        """Receiver centre minus each transmitter position, shape (r, 3)."""
        return np.ascontiguousarray(params.receiver_center[None, :] - self.positions)

    def by_proximity(self, params: ChannelParams) -> "NetworkLayout":
        """Reorder so the transmitter closest to the receiver is activated first."""
        dist = np.linalg.norm(self.offsets(params), axis=1)
        return NetworkLayout(self.positions[np.argsort(dist, kind="stable")])

    def permuted(self, order) -> "NetworkLayout":
        return NetworkLayout(self.positions[list(order)])


class FlowRegime(enum.Enum):
    LAMINAR = "laminar"
    TURBULENT = "turbulent"


def stokes_einstein(fluid: FluidProps) -> float:
    """Diffusion coefficient k_B*T / (6*pi*eta*R_s) in m^2/s."""
    return fluid.boltzmann_constant * fluid.temperature / (
        6.0 * math.pi * fluid.dynamic_viscosity * fluid.stokes_radius
    )


def reynolds(d_eff: float, v_eff: float, nu: float) -> float:
    if not nu > 0:
        raise DomainError(f"kinematic viscosity must be positive, got {nu!r}")
    return d_eff * v_eff / nu


def classify_flow(re: float) -> FlowRegime:
    # strictly above the threshold counts as turbulent
    return FlowRegime.TURBULENT if re > TURBULENT_REYNOLDS else FlowRegime.LAMINAR


def _check_time(t):
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"elapsed time must be positive and finite, got {t!r}")


def _offset(params, source):
    return params.receiver_center - _vec3(source, "source")


def arrival_probability(params: ChannelParams, source, t: float) -> float:
    """Probability that a molecule released at ``source`` is inside the receiver at ``t``."""
    _check_time(t)
    w = _offset(params, source)
    u = params.drift
    return kernels.arrival_prob(
        w[0], w[1], w[2], u[0], u[1], u[2],
        params.diffusion_coefficient, params.receiver_radius, float(t),
    )


def arrival_probability_derivative(params: ChannelParams, source, t: float) -> float:
    """Analytic d/dt of :func:`arrival_probability` (1/s)."""
    _check_time(t)
    w = _offset(params, source)
    u = params.drift
    return kernels.arrival_prob_dt(
        w[0], w[1], w[2], u[0], u[1], u[2],
        params.diffusion_coefficient, params.receiver_radius, float(t),
    )


def _quad(func, lo, hi, points, rtol, what, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(
                func, lo, hi, points=points or None, epsabs=0.0, epsrel=rtol, limit=500, **kw
            )
        except integrate.IntegrationWarning as exc:
            raise NumericError(f"{what} quadrature did not converge: {exc}", lo=lo, hi=hi) from exc
    return value, err


def arrival_probability_quadrature(
    params: ChannelParams, source, t: float, method: str = "radial", rtol: float = 1e-12
) -> float:
    """Arrival probability by adaptive quadrature, independent of the closed form.

    ``method="radial"`` integrates the shell-averaged Gaussian over the
    receiver radius; ``method="cubature"`` integrates the 3-D density over the
    ball in Cartesian coordinates (slow, for verification).
    """
    _check_time(t)
    w = _offset(params, source)
    c = w - params.drift * t
    v = 2.0 * params.diffusion_coefficient * t
    s = math.sqrt(v)
    R = params.receiver_radius
    if method == "radial":
        m = float(np.linalg.norm(c))
        norm = 1.0 / (s * math.sqrt(2.0 * math.pi))

        if m > 0.0:
            def density(r):
                return norm * r * math.exp(-0.5 * (r - m) ** 2 / v) * (-math.expm1(-2.0 * r * m / v)) / m
        else:
            def density(r):
                return norm * 2.0 * r * r / v * math.exp(-0.5 * r * r / v)

        marks = {m} | {m + k * s for k in (-8, -4, -2, -1, 1, 2, 4, 8)}
        marks |= {R - k * s for k in (0.5, 1, 2, 4, 8, 16, 32)}
        points = sorted(p for p in marks if 0.0 < p < R)
        value, err = _quad(density, 0.0, R, points, rtol, "radial")
        if not err <= max(1e3 * rtol * abs(value), 1e-300):
            raise NumericError("radial quadrature error estimate too large", value=value, err=err)
        return min(max(value, 0.0), 1.0)
    if method == "cubature":
        norm = (2.0 * math.pi * v) ** -1.5

        def density(x, y, z):
            dx, dy, dz = x + c[0], y + c[1], z + c[2]
            return norm * math.exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * v))

        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, _ = integrate.tplquad(
                    density,
                    -R, R,
                    lambda z: -math.sqrt(max(R * R - z * z, 0.0)),
                    lambda z: math.sqrt(max(R * R - z * z, 0.0)),
                    lambda z, y: -math.sqrt(max(R * R - z * z - y * y, 0.0)),
                    lambda z, y: math.sqrt(max(R * R - z * z - y * y, 0.0)),
                    epsabs=0.0,
                    epsrel=rtol,
                )
            except integrate.IntegrationWarning as exc:
                raise NumericError(f"cubature did not converge: {exc}") from exc
        return min(max(value, 0.0), 1.0)
    raise DomainError(f"unknown quadrature method {method!r}")


def arrival_probability_curve(params: ChannelParams, source, times) -> np.ndarray:
    """Vectorised :func:`arrival_probability` over an array of times."""
    times = np.asarray(times, dtype=float)
    return np.array([arrival_probability(params, source, float(t)) for t in times.ravel()]).reshape(
        times.shape
    )
