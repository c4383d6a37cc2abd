"""Deterministic mean-field dynamics of the disruption economy.

The expected functional fraction ``F`` evolves as

    dF/dt = P[Binomial(m, F) >= tau] - F * (1 + eps)      (tau > 0)
    dF/dt = 0                                             (tau = 0)

under the strategy ``(m, tau)`` currently in force.  This module
integrates those dynamics under several strategy policies, builds phase
portraits (the partition of [0, 1] into best-response segments with
drift signs), measures the poverty-trap basin, scans (alpha, F) phase
diagrams, detects limit cycles under committed re-optimisation, and
produces the redundancy-versus-complexity sweep.

Everything is deterministic and pure given its inputs.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .numerics import binomial_tail, clamp01
from .strategy import WITHDRAW, ModelParams, Strategy, _table, best_response

__all__ = [
    "BestResponse",
    "Overshoot",
    "Fixed",
    "Segment",
    "PhasePortrait",
    "Trajectory",
    "SwitchEvent",
    "CycleReport",
    "DiagramCell",
    "SweepPoint",
    "InsufficientDataError",
    "drift",
    "integrate",
    "phase_portrait",
    "trap_basin",
    "phase_diagram",
    "detect_cycle",
    "redundancy_sweep",
    "write_portrait_csv",
    "write_diagram_csv",
    "write_trajectory_csv",
    "write_sweep_csv",
]

#: Absolute F-precision to which segment boundaries are refined.
BOUNDARY_TOL = 1e-9

#: F quantisation used when matching recurring switch patterns.
CYCLE_QUANTUM = 1e-4


class InsufficientDataError(RuntimeError):
    """Raised when a trajectory is too short to classify as cyclic or settled."""


# --------------------------------------------------------------------------
# Policies


@dataclass(frozen=True)
class BestResponse:
    """Re-optimise every ``T`` time units; ``T = 0`` means every step."""

    T: float = 0.0

    def __post_init__(self) -> None:
        if self.T < 0.0:
            raise ValueError(f"commitment interval T must be >= 0, got {self.T}")


@dataclass(frozen=True)
class Overshoot:
    """Play ``(m* + s, tau* + s)`` where ``(m*, tau*)`` is the best response."""

    s: int

    def __post_init__(self) -> None:
        if self.s < 0:
            raise ValueError(f"overshoot s must be >= 0, got {self.s}")


@dataclass(frozen=True)
class Fixed:
    """Play one strategy forever."""

    strategy: Strategy


Policy = Union[BestResponse, Overshoot, Fixed]


# --------------------------------------------------------------------------
# Drift


def drift(s: Strategy, f: float, eps: float) -> float:
    """Instantaneous dF/dt under strategy ``s`` at functional fraction ``f``.

    Zero by convention whenever ``tau = 0`` (nothing is produced against
    a requirement, so the state does not move).
    """
    if eps < 0.0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    f = clamp01(f)
    if s.tau == 0:
        return 0.0
    return binomial_tail(s.m, s.tau, f) - f * (1.0 + eps)


# --------------------------------------------------------------------------
# Best-response segment map


@lru_cache(maxsize=32)
def _strategy_map(
    params: ModelParams, resolution: int
) -> tuple[tuple[float, ...], tuple[Strategy, ...]]:
    """Partition [0, 1] into maximal best-response runs.

    Returns interior boundaries (refined by bisection to ``BOUNDARY_TOL``)
    and the strategy on each of the ``len(bounds) + 1`` cells.  Segments
    narrower than the scan step may be merged into a neighbour; the grid
    is the stated semantics.
    """
    table = _table(params)
    grid = np.linspace(0.0, 1.0, resolution)
    strategies = [best_response(params, float(f)) for f in grid]
    bounds: list[float] = []
    cells: list[Strategy] = [strategies[0]]
    for i in range(len(grid) - 1):
        left, right = strategies[i], strategies[i + 1]
        if left == right:
            continue
        lo, hi = float(grid[i]), float(grid[i + 1])
        while hi - lo > BOUNDARY_TOL:
            mid = 0.5 * (lo + hi)
            if table.best(mid) == left:
                lo = mid
            else:
                hi = mid
        bounds.append(hi)
        cells.append(right)
    return tuple(bounds), tuple(cells)


def _strategy_lookup(
    params: ModelParams, resolution: int = 2000
) -> Callable[[float], Strategy]:
    bounds, cells = _strategy_map(params, resolution)
    blist = list(bounds)

    def lookup(f: float) -> Strategy:
        return cells[bisect_right(blist, f)]

    return lookup


# --------------------------------------------------------------------------
# Phase portrait


@dataclass(frozen=True)
class Segment:
    """One maximal best-response interval of the phase portrait."""

    f_lo: float
    f_hi: float
    strategy: Strategy
    drift_sign: str  # "negative" | "zero" | "positive" | "mixed"


@dataclass(frozen=True)
class PhasePortrait:
    params: ModelParams
    segments: tuple[Segment, ...]


def _sign_label(values: Iterable[float]) -> str:
    pos = neg = zero = 0
    for v in values:
        if v > 0.0:
            pos += 1
        elif v < 0.0:
            neg += 1
        else:
            zero += 1
    kinds = (pos > 0) + (neg > 0) + (zero > 0)
    if kinds > 1:
        return "mixed"
    if pos:
        return "positive"
    if neg:
        return "negative"
    return "zero"


def phase_portrait(
    params: ModelParams, resolution: int = 1000, overshoot: int = 0
) -> PhasePortrait:
    """Partition [0, 1] into best-response segments labelled by drift sign.

    Scans a uniform grid of ``resolution`` points, groups maximal runs of
    identical best response, refines each boundary by bisection to 1e-9
    in F, and labels each segment with the sign of the drift sampled at
    10 interior points ("mixed" when the sign changes inside).

    ``overshoot=s`` labels each segment with ``(m*+s, tau*+s)`` instead
    of the best response itself, with drift signs for that strategy; the
    segment boundaries are those of the underlying best-response map.
    """
    if resolution < 100:
        raise ValueError(f"resolution must be >= 100, got {resolution}")
    if overshoot < 0:
        raise ValueError(f"overshoot must be >= 0, got {overshoot}")
    bounds, cells = _strategy_map(params, resolution)
    edges = [0.0, *bounds, 1.0]
    segments = []
    for i, strat in enumerate(cells):
        if overshoot:
            strat = Strategy(strat.m + overshoot, strat.tau + overshoot)
        f_lo, f_hi = edges[i], edges[i + 1]
        interior = np.linspace(f_lo, f_hi, 12)[1:-1]
        label = _sign_label(drift(strat, float(f), params.eps) for f in interior)
        segments.append(Segment(f_lo, f_hi, strat, label))
    return PhasePortrait(params=params, segments=tuple(segments))


# --------------------------------------------------------------------------
# Trap basin


def trap_basin(
    params: ModelParams, resolution: int = 1000, overshoot: int = 0
) -> float:
    """Supremum of initial conditions whose trajectory never grows.

    Scans upward from the edge of the withdraw region for the first F at
    which the drift under the (possibly overshot) best response stops
    being strictly negative, and refines that boundary by bisection to
    1e-6.  Initial conditions on a drift-neutral plateau (for example the
    (1, 1) region when ``eps = 0``) hold their value rather than decay,
    so they do not extend the basin.  Returns 1.0 when no escape exists.
    """
    if resolution < 100:
        raise ValueError(f"resolution must be >= 100, got {resolution}")
    if overshoot < 0:
        raise ValueError(f"overshoot must be >= 0, got {overshoot}")

    lookup = _strategy_lookup(params)

    def strategy_at(f: float) -> Strategy:
        s = lookup(f)
        if overshoot and s != WITHDRAW:
            return Strategy(s.m + overshoot, s.tau + overshoot)
        if overshoot:
            return Strategy(overshoot, overshoot)
        return s

    if overshoot == 0:
        if params.alpha >= 1.0:
            return 1.0
        f_exit = params.alpha
    else:
        f_exit = 0.0

    lo = f_exit
    hi = None
    for k in range(1, resolution + 1):
        f = f_exit + (1.0 - f_exit) * k / resolution
        if drift(strategy_at(f), f, params.eps) < 0.0:
            lo = f
        else:
            hi = f
            break
    if hi is None:
        return 1.0
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if drift(strategy_at(mid), mid, params.eps) < 0.0:
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# Integration


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    old: Strategy
    new: Strategy


@dataclass
class Trajectory:
    """A sampled path F(t) with the strategy active on each step."""

    times: np.ndarray
    f_values: np.ndarray
    strategies: np.ndarray  # shape (len(times), 2); row i is active on [t_i, t_{i+1})
    switch_events: list[SwitchEvent]
    policy: Policy

    def strategy_at(self, index: int) -> Strategy:
        m, tau = self.strategies[index]
        return Strategy(int(m), int(tau))


def _rk4_step(m: int, tau: int, eps: float, f: float, dt: float) -> float:
    if tau == 0:
        return f

    def d(x: float) -> float:
        x = min(max(x, 0.0), 1.0)
        return binomial_tail(m, tau, x) - x * (1.0 + eps)

    k1 = d(f)
    k2 = d(f + 0.5 * dt * k1)
    k3 = d(f + 0.5 * dt * k2)
    k4 = d(f + dt * k3)
    f = f + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return min(max(f, 0.0), 1.0)


def integrate(
    params: ModelParams,
    f0: float,
    policy: Policy,
    t_end: float,
    dt: float = 1e-3,
) -> Trajectory:
    """Fixed-step RK4 integration of the mean-field dynamics.

    The strategy is held constant within a step (the drift is smooth
    there); policy semantics:

    * ``BestResponse(T=0)``: re-evaluate the best response every step.
    * ``BestResponse(T>0)``: strategy frozen on ``[kT, (k+1)T)``,
      re-evaluated from ``F(kT)`` (at step granularity).
    * ``Overshoot(s)``: play ``(m*+s, tau*+s)`` for the instantaneous
      best response, every step.
    * ``Fixed(s)``: never changes.

    F is clamped to [0, 1] after each step and switch events are
    recorded at step granularity.
    """
    if not (t_end > 0.0):
        raise ValueError(f"t_end must be > 0, got {t_end}")
    if not (0.0 < dt <= t_end):
        raise ValueError(f"dt must satisfy 0 < dt <= t_end, got dt={dt}")
    f = clamp01(f0)

    if isinstance(policy, Fixed):
        strat_fn: Callable[[float], Strategy] = lambda _: policy.strategy
    elif isinstance(policy, Overshoot):
        lookup = _strategy_lookup(params)
        s = policy.s

        def strat_fn(x: float) -> Strategy:
            base = lookup(x)
            return Strategy(base.m + s, base.tau + s) if s else base

    elif isinstance(policy, BestResponse):
        lookup = _strategy_lookup(params)
        strat_fn = lookup
    else:
        raise TypeError(f"unknown policy {policy!r}")

    n_steps = int(math.ceil(t_end / dt - 1e-9))
    times = np.empty(n_steps + 1)
    f_values = np.empty(n_steps + 1)
    strategies = np.empty((n_steps + 1, 2), dtype=np.int64)
    switch_events: list[SwitchEvent] = []

    commit = isinstance(policy, BestResponse) and policy.T > 0.0
    current = strat_fn(f)
    next_reeval = policy.T if commit else 0.0

    t = 0.0
    for i in range(n_steps):
        if commit:
            if t >= next_reeval - 1e-12:
                new = best_response(params, f)
                next_reeval = (math.floor(t / policy.T + 1e-9) + 1.0) * policy.T
                if new != current:
                    switch_events.append(SwitchEvent(t, current, new))
                    current = new
        else:
            new = strat_fn(f)
            if new != current:
                switch_events.append(SwitchEvent(t, current, new))
                current = new
        times[i] = t
        f_values[i] = f
        strategies[i, 0] = current.m
        strategies[i, 1] = current.tau
        step = dt if i < n_steps - 1 else t_end - t
        f = _rk4_step(current.m, current.tau, params.eps, f, step)
        t = t_end if i == n_steps - 1 else (i + 1) * dt
    times[n_steps] = t_end
    f_values[n_steps] = f
    strategies[n_steps] = strategies[n_steps - 1]
    return Trajectory(times, f_values, strategies, switch_events, policy)


# --------------------------------------------------------------------------
# Cycle detection


@dataclass(frozen=True)
class CycleReport:
    detected: bool
    period: Optional[float]
    f_min: float
    f_max: float
    strategy_sequence: tuple[Strategy, ...]


#: F ranges at or below this are treated as a settled point, not a cycle;
#: step-granularity chatter at a sliding boundary stays well below it.
DEGENERATE_RANGE = 5e-3


def _zigzag_extrema(
    times: np.ndarray, values: np.ndarray, delta: float
) -> tuple[list[float], list[float]]:
    """Alternating local maxima/minima times with prominence >= delta."""
    max_times: list[float] = []
    min_times: list[float] = []
    direction = 0  # +1 tracking a high, -1 tracking a low, 0 undecided
    ext_v = float(values[0])
    ext_t = float(times[0])
    for t, v in zip(times, values):
        v = float(v)
        if direction == 0:
            if v >= ext_v + delta:
                direction = 1
                ext_v, ext_t = v, float(t)
            elif v <= ext_v - delta:
                direction = -1
                ext_v, ext_t = v, float(t)
        elif direction > 0:
            if v > ext_v:
                ext_v, ext_t = v, float(t)
            elif v < ext_v - delta:
                max_times.append(ext_t)
                direction = -1
                ext_v, ext_t = v, float(t)
        else:
            if v < ext_v:
                ext_v, ext_t = v, float(t)
            elif v > ext_v + delta:
                min_times.append(ext_t)
                direction = 1
                ext_v, ext_t = v, float(t)
    return max_times, min_times


def detect_cycle(traj: Trajectory, transient: float) -> CycleReport:
    """Classify the post-transient behaviour of a trajectory.

    Discards ``t < transient``.  A trajectory whose post-transient F range
    stays within :data:`DEGENERATE_RANGE` has settled (boundary chatter at
    step granularity quantises to a point) and is not a cycle.  Otherwise
    the sequence of (strategy, F quantised to 1e-4) tokens at switch times
    is checked for an exactly repeating suffix; failing that, recurrence
    is established when F completes at least two full falls and recoveries
    of prominence above :data:`DEGENERATE_RANGE` (committed-policy
    attractors wander slightly between passes, so their tokens repeat only
    approximately).  The reported period is the mean time between pattern
    repeats.  Raises :class:`InsufficientDataError` when there are fewer
    than two post-transient switches and F is still moving faster than
    1e-8 per unit time.
    """
    if transient < 0.0:
        raise ValueError(f"transient must be >= 0, got {transient}")
    t_last = float(traj.times[-1])
    if t_last <= transient:
        raise InsufficientDataError(
            f"trajectory ends at t={t_last}, not beyond transient={transient}"
        )

    keep = traj.times >= transient
    f_win = traj.f_values[keep]
    t_win = traj.times[keep]
    f_min = float(f_win.min())
    f_max = float(f_win.max())

    mid = len(f_win) // 2
    span = float(t_win[-1] - t_win[mid])
    rate = abs(float(f_win[-1] - f_win[mid])) / span if span > 0 else 0.0
    converged = rate <= 1e-8

    events = [e for e in traj.switch_events if e.time > transient]
    if len(events) < 2:
        if converged:
            return CycleReport(False, None, f_min, f_max, ())
        raise InsufficientDataError(
            "fewer than 2 post-transient switch events and F has not converged"
        )
    if f_max - f_min <= DEGENERATE_RANGE:
        return CycleReport(False, None, f_min, f_max, ())

    sample_idx = np.searchsorted(traj.times, [e.time for e in events])
    tokens = [
        (e.new.m, e.new.tau, round(float(traj.f_values[j]) / CYCLE_QUANTUM))
        for e, j in zip(events, sample_idx)
    ]
    times = [e.time for e in events]
    n = len(tokens)
    for p in range(1, n // 2 + 1):
        if tokens[n - p :] == tokens[n - 2 * p : n - p]:
            diffs = [times[i + p] - times[i] for i in range(n - 2 * p, n - p)]
            period = float(np.mean(diffs))
            seq = tuple(Strategy(m, tau) for m, tau, _ in tokens[n - p :])
            return CycleReport(True, period, f_min, f_max, seq)

    max_times, min_times = _zigzag_extrema(t_win, f_win, DEGENERATE_RANGE)
    if len(min_times) >= 2 and len(max_times) >= 2:
        period = float(np.mean(np.diff(min_times)))
        lo, hi = min_times[-2], min_times[-1]
        seq = tuple(e.new for e in events if lo < e.time <= hi)
        if not seq:
            seq = tuple(e.new for e in events)
        return CycleReport(True, period, f_min, f_max, seq)
    return CycleReport(False, None, f_min, f_max, ())


# --------------------------------------------------------------------------
# Phase diagram and redundancy sweep


@dataclass(frozen=True)
class DiagramCell:
    alpha: float
    f: float
    strategy: Strategy
    drift_sign: str


def phase_diagram(
    beta: float,
    eps: float,
    alpha_grid: Sequence[float],
    f_grid: Sequence[float],
) -> list[DiagramCell]:
    """Best response and pointwise drift sign over an (alpha, F) grid."""
    if len(alpha_grid) == 0 or len(f_grid) == 0:
        raise ValueError("alpha_grid and f_grid must be non-empty")
    if list(alpha_grid) != sorted(alpha_grid) or list(f_grid) != sorted(f_grid):
        raise ValueError("alpha_grid and f_grid must be sorted ascending")
    cells = []
    for alpha in alpha_grid:
        params = ModelParams(alpha=alpha, beta=beta, eps=eps)
        for f in f_grid:
            s = best_response(params, f)
            d = drift(s, f, eps)
            sign = "positive" if d > 0 else ("negative" if d < 0 else "zero")
            cells.append(DiagramCell(alpha, f, s, sign))
    return cells


@dataclass(frozen=True)
class SweepPoint:
    beta: float
    f: float
    tau_star: int
    buffer: int


def redundancy_sweep(
    alpha: float,
    eps: float,
    betas: Sequence[float],
    f_grid: Sequence[float],
) -> list[SweepPoint]:
    """Complexity ``tau*`` and buffer ``m* - tau*`` across the growth region.

    For each ``beta``, grid points at or below the trap basin are
    excluded; the rest record the best response's complexity and buffer.
    """
    if len(betas) == 0 or len(f_grid) == 0:
        raise ValueError("betas and f_grid must be non-empty")
    points = []
    for beta in betas:
        params = ModelParams(alpha=alpha, beta=beta, eps=eps)
        basin = trap_basin(params)
        for f in f_grid:
            if f <= basin:
                continue
            s = best_response(params, f)
            points.append(SweepPoint(beta, f, s.tau, s.m - s.tau))
    return points


# --------------------------------------------------------------------------
# CSV emission (9 significant digits, comma separator, LF endings)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _write_rows(path, header: str, rows: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def write_portrait_csv(portrait: PhasePortrait, path) -> None:
    _write_rows(
        path,
        "f_lo,f_hi,m,tau,sign",
        (
            f"{_fmt(s.f_lo)},{_fmt(s.f_hi)},{s.strategy.m},{s.strategy.tau},{s.drift_sign}"
            for s in portrait.segments
        ),
    )


def write_diagram_csv(cells: Sequence[DiagramCell], path) -> None:
    _write_rows(
        path,
        "alpha,f,m,tau,sign",
        (
            f"{_fmt(c.alpha)},{_fmt(c.f)},{c.strategy.m},{c.strategy.tau},{c.drift_sign}"
            for c in cells
        ),
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    _write_rows(
        path,
        "t,f,m,tau",
        (
            f"{_fmt(float(traj.times[i]))},{_fmt(float(traj.f_values[i]))},"
            f"{int(traj.strategies[i, 0])},{int(traj.strategies[i, 1])}"
            for i in range(len(traj.times))
        ),
    )


def write_sweep_csv(points: Sequence[SweepPoint], path) -> None:
    _write_rows(
        path,
        "beta,f,tau_star,buffer",
        (f"{_fmt(p.beta)},{_fmt(p.f)},{p.tau_star},{p.buffer}" for p in points),
    )
