"""Release-management schemes: slot durations and molecule allocations.

All four schemes minimise the equal-weight mean of the per-transmitter BER
vector. STSN is closed form. DTSN, STDN and DTDN use cyclic coordinate
(alternating) search with a golden-section 1-D solver, each initialised from
its static counterpart so the objectives are ordered by construction.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from mcvd._backend import kernels
from mcvd.channel import ChannelParams, NetworkLayout
from mcvd.detection import VAR_FLOOR
from mcvd.errors import DomainError, InfeasibleError, NumericError
from mcvd.stats import MomentMode

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
EPS = np.finfo(float).eps


class SchemeKind(enum.Enum):
    STSN = "STSN"
    STDN = "STDN"
    DTSN = "DTSN"
    DTDN = "DTDN"

    @classmethod
    def parse(cls, name) -> "SchemeKind":
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise DomainError(f"unknown scheme {name!r}") from None


@dataclass(frozen=True)
class Bounds:
    psi_t: float
    T_max: float
    psi_A: float
    Psi_A: float
    Q: float

    def check(self, r: int) -> None:
        if not self.psi_t > 0:
            raise InfeasibleError(f"psi_t must be positive, got {self.psi_t}")
        if not r * self.psi_t < self.T_max:
            raise InfeasibleError(f"r*psi_t = {r * self.psi_t} leaves no room under T_max = {self.T_max}")
        if not 0 < self.psi_A < self.Psi_A:
            raise InfeasibleError(f"need 0 < psi_A < Psi_A, got {self.psi_A}, {self.Psi_A}")
        if not self.Q > 0:
            raise InfeasibleError(f"molecule budget Q must be positive, got {self.Q}")


@dataclass(frozen=True)
class SolverConfig:
    coord_tol: float = 1e-6
    obj_tol: float = 1e-8
    max_outer_iters: int = 100
    max_1d_iters: int = 200
    # coarse samples taken before golden-section refinement (0 disables)
    n_scan: int = 16

    def __post_init__(self):
        if not (self.coord_tol > 0 and self.obj_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_outer_iters < 1 or self.max_1d_iters < 1 or self.n_scan < 0:
            raise DomainError("iteration limits must be positive")


@dataclass
class Solution:
    scheme: SchemeKind
    allocation: np.ndarray
    schedule: np.ndarray
    objective: float
    per_tx_ber: np.ndarray
    iterations: dict = field(default_factory=dict)
    objective_trace: list = field(default_factory=list)
    complexity_estimate: float = 0.0
    measured_cost: int = 0
    allocation_int: Optional[np.ndarray] = None
    objective_int: Optional[float] = None
    per_tx_ber_int: Optional[np.ndarray] = None
    converged: bool = True

    @property
    def frame_length(self) -> float:
        return float(np.sum(self.schedule))


@dataclass
class LinkModel:
    """Channel, layout and statistics settings that define the objective."""

    channel: ChannelParams
    layout: NetworkLayout
    U: int = 3
    mode: MomentMode = MomentMode.PAPER_EXACT
    var_floor: float = VAR_FLOOR
    evaluations: int = 0

    def __post_init__(self):
        self.mode = MomentMode.parse(self.mode)
        if self.U < 0:
            raise DomainError("U must be >= 0")
        self._offsets = self.layout.offsets(self.channel)

    @property
    def r(self) -> int:
        return self.layout.r

    def _args(self):
        return (
            self._offsets,
            self.channel.drift,
            self.channel.diffusion_coefficient,
            self.channel.receiver_radius,
            int(self.U),
            self.mode is MomentMode.PAPER_EXACT,
        )

    def objective(self, t, A) -> float:
        self.evaluations += 1
        return kernels.mean_ber(np.asarray(t, float), np.asarray(A, float), *self._args(), self.var_floor)

    def ber_vector(self, t, A) -> np.ndarray:
        table = kernels.link_table(np.asarray(t, float), np.asarray(A, float), *self._args())
        return kernels.ber_table(table, self.var_floor)[1]


@dataclass(frozen=True)
class Minimum1D:
    x: float
    fx: float
    iterations: int
    evaluations: int
    converged: bool


def _better(fa, xa, fb, xb):
    """True if (fa, xa) beats (fb, xb); ties go to the lower coordinate."""
    return fa < fb or (fa == fb and xa < xb)


def minimize_1d(f: Callable[[float], float], lo: float, hi: float, cfg: SolverConfig = SolverConfig()) -> Minimum1D:
    """Golden-section search on [lo, hi] after an optional coarse scan.

    The scan picks the bracket around the best sample, so for a function
    with several local minima the result is the one nearest the best
    sample; this is logged. Stops once the bracket is narrower than
    ``coord_tol * (hi - lo)``.
    """
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    # never ask for a bracket finer than the floating-point spacing near hi
    width_tol = max(cfg.coord_tol * (hi - lo), 8.0 * EPS * max(abs(lo), abs(hi)))
    nevals = 0
    a, b = lo, hi
    best_x, best_f = None, math.inf

    def consider(x, fx):
        nonlocal best_x, best_f
        if best_x is None or _better(fx, x, best_f, best_x):
            best_x, best_f = x, fx

    if cfg.n_scan > 0:
        xs = np.linspace(lo, hi, cfg.n_scan + 1)
        fs = []
        for x in xs:
            fx = f(float(x))
            nevals += 1
            if not math.isfinite(fx):
                raise NumericError("objective not finite", x=float(x))
            fs.append(fx)
            consider(float(x), fx)
        k = int(np.argmin(fs))
        a = float(xs[max(k - 1, 0)])
        b = float(xs[min(k + 1, cfg.n_scan)])
        interior_minima = sum(
            1 for i in range(1, cfg.n_scan) if fs[i] < fs[i - 1] and fs[i] < fs[i + 1]
        )
        if interior_minima > 1:
            logger.debug("minimize_1d: %d local minima on scan; returning a local minimiser", interior_minima)

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    nevals += 2
    consider(c, fc)
    consider(d, fd)
    it = 0
    converged = True
    while b - a > width_tol:
        if it >= cfg.max_1d_iters:
            converged = False
            logger.warning("minimize_1d: %d iterations without reaching width %.3g", it, width_tol)
            break
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            consider(c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            consider(d, fd)
        nevals += 1
    return Minimum1D(best_x, best_f, it, nevals, converged)


def bisect_gradient(df: Callable[[float], float], lo: float, hi: float, cfg: SolverConfig = SolverConfig()) -> Minimum1D:
    """Minimiser of a unimodal function by bisection on its derivative ``df``.

    Verification counterpart of :func:`minimize_1d`: a non-negative slope
    at ``lo`` returns ``lo`` and a non-positive slope at ``hi`` returns
    ``hi``. ``fx`` of the result is NaN because ``f`` is never evaluated.
    """
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    width_tol = max(cfg.coord_tol * (hi - lo), 8.0 * EPS * max(abs(lo), abs(hi)))
    g_lo = df(lo)
    if g_lo >= 0.0:
        return Minimum1D(lo, math.nan, 0, 1, True)
    g_hi = df(hi)
    if g_hi <= 0.0:
        return Minimum1D(hi, math.nan, 0, 2, True)
    a, b = lo, hi
    it = 0
    while b - a > width_tol:
        if it >= cfg.max_1d_iters:
            logger.warning("bisect_gradient: %d iterations without reaching width %.3g", it, width_tol)
            return Minimum1D(0.5 * (a + b), math.nan, it, it + 2, False)
        it += 1
        mid = 0.5 * (a + b)
        if df(mid) > 0.0:
            b = mid
        else:
            a = mid
    return Minimum1D(0.5 * (a + b), math.nan, it, it + 2, True)


def scalarize(bers: Sequence[float]) -> float:
    """Equal-weight sum of the per-transmitter BER vector (weights 1/r)."""
    arr = np.asarray(bers, dtype=float)
    if arr.size == 0:
        raise DomainError("cannot scalarize an empty BER vector")
    return float(arr.mean())


def stsn(bounds: Bounds, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform allocation Q/r and uniform slots T_max/r."""
    if r < 1:
        raise DomainError("r must be >= 1")
    bounds.check(r)
    return np.full(r, bounds.Q / r), np.full(r, bounds.T_max / r)


def _finish(model, scheme, A, t, trace, iterations, cfg, converged, evals_before, bounds):
    bers = model.ber_vector(t, A)
    sol = Solution(
        scheme=scheme,
        allocation=np.array(A, dtype=float),
        schedule=np.array(t, dtype=float),
        objective=scalarize(bers),
        per_tx_ber=bers,
        iterations=iterations,
        objective_trace=list(trace),
        converged=converged,
    )
    sol.complexity_estimate = complexity_estimate(scheme, model.r, iterations)
    sol.measured_cost = model.evaluations - evals_before
    if scheme in (SchemeKind.STDN, SchemeKind.DTDN):
        a_int = np.clip(np.rint(sol.allocation), math.ceil(bounds.psi_A), math.floor(bounds.Psi_A))
        sol.allocation_int = a_int
        sol.per_tx_ber_int = model.ber_vector(t, a_int)
        sol.objective_int = scalarize(sol.per_tx_ber_int)
    return sol


def solve_stsn(bounds: Bounds, model: LinkModel) -> Solution:
    A, t = stsn(bounds, model.r)
    before = model.evaluations
    g = model.objective(t, A)
    return _finish(model, SchemeKind.STSN, A, t, [g], {}, SolverConfig(), True, before, bounds)


def _time_box(bounds, cfg):
    lo = bounds.psi_t * (1.0 + cfg.coord_tol)
    return lo


def _time_pass(model, bounds, cfg, t, A, g):
    """One cyclic pass over the slot durations. Returns the new objective.

    Single-slot moves cannot shift time between slots once the frame fills
    T_max, so each pass also line-searches every pairwise transfer at a
    fixed frame length.
    """
    lo = _time_box(bounds, cfg)
    r = model.r
    for s in range(r):
        hi = bounds.T_max - (t.sum() - t[s])
        if not hi > lo:
            continue
        trial = t.copy()

        def f(x, s=s, trial=trial):
            trial[s] = x
            return model.objective(trial, A)

        res = minimize_1d(f, lo, hi, cfg)
        if _better(res.fx, res.x, g, t[s]):
            t[s] = res.x
            g = res.fx
    for s in range(r):
        for k in range(s + 1, r):
            pair = t[s] + t[k]
            if not pair - lo > lo:
                continue
            trial = t.copy()

            def f(x, s=s, k=k, pair=pair, trial=trial):
                trial[s] = x
                trial[k] = pair - x
                return model.objective(trial, A)

            res = minimize_1d(f, lo, pair - lo, cfg)
            if res.fx < g:
                t[s] = res.x
                t[k] = pair - res.x
                g = res.fx
    return g


def _alloc_pass(model, bounds, cfg, t, A, g):
    span = bounds.Psi_A - bounds.psi_A
    lo = bounds.psi_A + cfg.coord_tol * span
    hi = bounds.Psi_A - cfg.coord_tol * span
    for s in range(model.r):
        trial = A.copy()

        def f(x, s=s, trial=trial):
            trial[s] = x
            return model.objective(t, trial)

        res = minimize_1d(f, lo, hi, cfg)
        if _better(res.fx, res.x, g, A[s]):
            A[s] = res.x
            g = res.fx
    return g


def _asm(pass_fn, model, bounds, cfg, t, A, g, trace):
    """Repeat ``pass_fn`` until the relative decrease drops below obj_tol."""
    iters = 0
    converged = False
    while iters < cfg.max_outer_iters:
        iters += 1
        new = pass_fn(model, bounds, cfg, t, A, g)
        decrease = g - new
        g = new
        trace.append(g)
        if decrease <= cfg.obj_tol * max(abs(g), 1e-300):
            converged = True
            break
    return g, iters, converged


def _clip_alloc(A, bounds, cfg):
    span = bounds.Psi_A - bounds.psi_A
    return np.clip(A, bounds.psi_A + cfg.coord_tol * span, bounds.Psi_A - cfg.coord_tol * span)


def dtsn(bounds: Bounds, model: LinkModel, cfg: SolverConfig = SolverConfig(), init_t=None) -> Solution:
    """Optimise slot durations with the allocation fixed at Q/r."""
    r = model.r
    A, t0 = stsn(bounds, r)
    t = np.array(t0 if init_t is None else init_t, dtype=float)
    before = model.evaluations
    g = model.objective(t, A)
    trace = [g]
    g, alpha, ok = _asm(_time_pass, model, bounds, cfg, t, A, g, trace)
    return _finish(model, SchemeKind.DTSN, A, t, trace, {"alpha": alpha}, cfg, ok, before, bounds)


def stdn(bounds: Bounds, model: LinkModel, cfg: SolverConfig = SolverConfig(), init_A=None) -> Solution:
    """Optimise the allocation inside [psi_A, Psi_A] with uniform slots."""
    r = model.r
    A0, t = stsn(bounds, r)
    A = _clip_alloc(np.array(A0 if init_A is None else init_A, dtype=float), bounds, cfg)
    before = model.evaluations
    g = model.objective(t, A)
    trace = [g]
    g, beta, ok = _asm(_alloc_pass, model, bounds, cfg, t, A, g, trace)
    return _finish(model, SchemeKind.STDN, A, t, trace, {"beta": beta}, cfg, ok, before, bounds)


def dtdn(
    bounds: Bounds,
    model: LinkModel,
    cfg: SolverConfig = SolverConfig(),
    init: Optional[tuple] = None,
) -> Solution:
    """Alternate full allocation and slot-duration searches.

    ``init`` is an (A, t) pair; by default DTSN and STDN are solved first and
    the better of the two starts the alternation.
    """
    before = model.evaluations
    if init is None:
        candidates = [dtsn(bounds, model, cfg), stdn(bounds, model, cfg)]
        start = min(candidates, key=lambda s: s.objective)
        init = (start.allocation, start.schedule)
    A = _clip_alloc(np.array(init[0], dtype=float), bounds, cfg)
    t = np.array(init[1], dtype=float)
    g = model.objective(t, A)
    trace = [g]
    alphas, betas = [], []
    gamma = 0
    converged = False
    while gamma < cfg.max_outer_iters:
        gamma += 1
        start = g
        g, beta, _ = _asm(_alloc_pass, model, bounds, cfg, t, A, g, [])
        g, alpha, _ = _asm(_time_pass, model, bounds, cfg, t, A, g, [])
        betas.append(beta)
        alphas.append(alpha)
        trace.append(g)
        if start - g <= cfg.obj_tol * max(abs(g), 1e-300):
            converged = True
            break
    iterations = {"alpha": max(alphas), "beta": max(betas), "gamma": gamma}
    return _finish(model, SchemeKind.DTDN, A, t, trace, iterations, cfg, converged, before, bounds)


def solve_all(bounds: Bounds, model: LinkModel, cfg: SolverConfig = SolverConfig(), schemes=None) -> dict:
    """Solve the requested schemes along the initialisation chain."""
    wanted = [SchemeKind.parse(s) for s in (schemes or list(SchemeKind))]
    out = {SchemeKind.STSN: solve_stsn(bounds, model)}
    need_dtsn = SchemeKind.DTSN in wanted or SchemeKind.DTDN in wanted
    need_stdn = SchemeKind.STDN in wanted or SchemeKind.DTDN in wanted
    if need_dtsn:
        out[SchemeKind.DTSN] = dtsn(bounds, model, cfg, init_t=out[SchemeKind.STSN].schedule)
    if need_stdn:
        out[SchemeKind.STDN] = stdn(bounds, model, cfg, init_A=out[SchemeKind.STSN].allocation)
    if SchemeKind.DTDN in wanted:
        start = min((out[SchemeKind.DTSN], out[SchemeKind.STDN]), key=lambda s: s.objective)
        out[SchemeKind.DTDN] = dtdn(bounds, model, cfg, init=(start.allocation, start.schedule))
    return {k: out[k] for k in wanted}


def solve(scheme, bounds: Bounds, model: LinkModel, cfg: SolverConfig = SolverConfig()) -> Solution:
    return solve_all(bounds, model, cfg, [scheme])[SchemeKind.parse(scheme)]


# Interior-point cost model defaults: constraint count per scheme, initial
# accuracy, stopping accuracy and accuracy update factor.
DEFAULT_CONSTRAINTS = {SchemeKind.DTSN: 2, SchemeKind.STDN: 2, SchemeKind.DTDN: 3}
DEFAULT_RHO = (0.1, 1e-8, 10.0)


def interior_point_cost(n_constraints: float, rho1: float, rho2: float, rho3: float) -> float:
    if not rho3 > 1 or not rho1 > 0 or not rho2 > 0 or not n_constraints > 0:
        raise DomainError("need rho1, rho2, Lambda > 0 and rho3 > 1")
    return math.log(n_constraints / (rho1 * rho2)) / math.log(rho3)


def complexity_estimate(
    scheme,
    r: int,
    iters: dict,
    n_constraints: Optional[float] = None,
    rho1: float = DEFAULT_RHO[0],
    rho2: float = DEFAULT_RHO[1],
    rho3: float = DEFAULT_RHO[2],
) -> float:
    """Operation-count estimate: r*alpha*C, r*beta*C or 2*r^2*alpha*beta*gamma*C."""
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.STSN:
        return 0.0
    lam = DEFAULT_CONSTRAINTS[scheme] if n_constraints is None else n_constraints
    c = interior_point_cost(lam, rho1, rho2, rho3)
    if scheme is SchemeKind.DTSN:
        return r * iters["alpha"] * c
    if scheme is SchemeKind.STDN:
        return r * iters["beta"] * c
    return 2 * r * r * iters["alpha"] * iters["beta"] * iters["gamma"] * c


@dataclass
class ConvexityReport:
    second_differences: np.ndarray  # (n_points, n_coords)
    steps: np.ndarray  # (n_points, n_coords)

    @property
    def all_positive(self) -> bool:
        return bool(np.all(self.second_differences > 0))

    @property
    def negatives(self) -> list:
        return [tuple(int(i) for i in idx) for idx in np.argwhere(~(self.second_differences > 0))]

    @property
    def min_value(self) -> float:
        return float(np.min(self.second_differences))


def convexity_probe(
    objective: Callable[[np.ndarray], float],
    grid,
    h,
    coords: Optional[Sequence[int]] = None,
) -> ConvexityReport:
    """Central second differences along each coordinate at each grid point.

    ``h`` is a scalar or per-coordinate step. A step whose numerator is
    lost in rounding is enlarged tenfold once; if it is still lost the probe
    raises :class:`NumericError`.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    n, dim = pts.shape
    coords = list(range(dim)) if coords is None else list(coords)
    steps = np.broadcast_to(np.asarray(h, dtype=float), (dim,)).copy()
    values = np.empty((n, len(coords)))
    used = np.empty((n, len(coords)))
    for i, x in enumerate(pts):
        fx = objective(x)
        for k, c in enumerate(coords):
            step = steps[c]
            for attempt in range(2):
                e = np.zeros(dim)
                e[c] = step
                num = objective(x - e) - 2.0 * fx + objective(x + e)
                if abs(num) >= 1e3 * EPS * abs(fx):
                    break
                if attempt == 0:
                    step *= 10.0
                else:
                    raise NumericError(
                        "second difference lost in rounding", point=x.tolist(), coord=c, step=step
                    )
            values[i, k] = num / (step * step)
            used[i, k] = step
    return ConvexityReport(values, used)
