"""Finite-N stochastic simulation on a dynamic input-output network.

Agents attempt to produce at rate 1 and suffer exogenous failures at
rate ``eps``.  A production attempt by agent ``i`` samples ``m``
suppliers with replacement from the population, weighted by

    w_j = r**S(j, i) * (1 + k_j)**xi        (j != i, weight 0 for i)

where ``S(j, i)`` is 1 iff ``j`` successfully delivered an input to
``i`` on ``i``'s previous attempt, ``k_j`` is ``j``'s current customer
count, ``r >= 1`` makes supplier links sticky, and ``xi >= 0`` biases
the search toward popular suppliers.  ``(r, xi) = (1, 0)`` recovers the
annealed baseline in which suppliers are uniformly random.

The event stream is a single merged Poisson process of rate
``n_agents * (1 + eps)``; each event picks a uniform agent and is a
production attempt with probability ``1/(1+eps)``, else an exogenous
failure.  Runs are fully deterministic given the config seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .numerics import clamp01
from .strategy import ModelParams, Strategy, best_response

__all__ = [
    "AbmConfig",
    "AbmState",
    "RunResult",
    "EnsembleSummary",
    "supplier_weights",
    "run",
    "run_replicas",
    "replica_seed",
    "verify_bookkeeping",
    "write_timeseries_csv",
    "write_finals_csv",
]

_POOL = 1 << 14


@dataclass(frozen=True)
class AbmConfig:
    """Configuration of one agent-based simulation.

    ``policy=None`` means every agent plays the best response to the
    current global functional fraction ``n/N`` (re-evaluated at each
    attempt, cached per ``n``); a :class:`~disruptsim.strategy.Strategy`
    fixes the strategy for the whole run.
    """

    n_agents: int
    params: ModelParams
    r: float = 1.0
    xi: float = 0.0
    f0: float = 0.5
    policy: Optional[Strategy] = None
    t_end: float = 100.0
    sample_dt: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_agents < 2:
            raise ValueError(f"n_agents must be >= 2, got {self.n_agents}")
        if not (self.r >= 1.0):
            raise ValueError(f"stickiness r must be >= 1, got {self.r}")
        if not (self.xi >= 0.0):
            raise ValueError(f"attachment exponent xi must be >= 0, got {self.xi}")
        clamp01(self.f0)
        if not (self.t_end > 0.0):
            raise ValueError(f"t_end must be > 0, got {self.t_end}")
        if not (0.0 < self.sample_dt <= self.t_end):
            raise ValueError(
                f"sample_dt must satisfy 0 < sample_dt <= t_end, got {self.sample_dt}"
            )
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.policy is not None and (self.policy.m < 0 or self.policy.tau < 0):
            raise ValueError(f"fixed strategy must be nonnegative, got {self.policy}")


@dataclass
class AbmState:
    """Full simulation state: flags, supplier slots, and customer counts."""

    time: float
    functional: np.ndarray  # bool, shape (n_agents,)
    suppliers: list[list[int]]  # agent -> supplier indices (with multiplicity)
    delivered: list[list[bool]]  # agent -> per-slot delivery-success flags
    customer_count: np.ndarray  # int64, shape (n_agents,)

    @property
    def fraction_functional(self) -> float:
        return float(np.count_nonzero(self.functional)) / len(self.functional)


@dataclass
class RunResult:
    sample_times: np.ndarray
    f_series: np.ndarray
    final_state: AbmState
    #: (n_functional_before, m, tau, success) per production attempt;
    #: populated only when run(..., record_attempts=True).
    attempts: Optional[list[tuple[int, int, int, bool]]] = None


def supplier_weights(state: AbmState, requester: int, r: float, xi: float) -> np.ndarray:
    """Sampling weight of every agent as a supplier for ``requester``.

    Agent ``j != requester`` has weight ``r**s * (1 + k_j)**xi`` where
    ``s = 1`` iff ``j`` occupies a supplier slot of the requester whose
    delivered flag is true; the requester itself has weight 0.
    """
    n = len(state.functional)
    if not (0 <= requester < n):
        raise ValueError(f"requester index {requester} out of range for {n} agents")
    if xi == 0.0:
        w = np.ones(n)
    else:
        w = (1.0 + state.customer_count.astype(float)) ** xi
    if r != 1.0:
        seen: set[int] = set()
        for j, deliv in zip(state.suppliers[requester], state.delivered[requester]):
            if deliv and j not in seen:
                seen.add(j)
                w[j] *= r
    w[requester] = 0.0
    return w


def verify_bookkeeping(state: AbmState) -> None:
    """Raise if customer counts disagree with the supplier slot lists."""
    n = len(state.functional)
    recomputed = np.zeros(n, dtype=np.int64)
    for slots in state.suppliers:
        for j in slots:
            recomputed[j] += 1
    if not np.array_equal(recomputed, state.customer_count):
        bad = np.nonzero(recomputed != state.customer_count)[0]
        raise AssertionError(f"customer_count out of sync at agents {bad[:10]}")


def run(
    config: AbmConfig,
    record_attempts: bool = False,
    validate_every: int = 0,
) -> RunResult:
    """Run one event-driven simulation.

    ``validate_every > 0`` re-derives the customer counts from the
    supplier lists every that many events and raises on mismatch (slow;
    intended for tests).
    """
    params = config.params
    n = config.n_agents
    eps = params.eps
    r = config.r
    xi = config.xi
    rng = np.random.default_rng(config.seed)

    functional = rng.random(n) < config.f0
    n_func = int(np.count_nonzero(functional))
    suppliers: list[list[int]] = [[] for _ in range(n)]
    delivered: list[list[bool]] = [[] for _ in range(n)]
    customer_count = np.zeros(n, dtype=np.int64)
    base_weight = np.ones(n)  # (1 + k)**xi, maintained incrementally

    n_samples = int(math.floor(config.t_end / config.sample_dt + 1e-9)) + 1
    sample_times = np.arange(n_samples) * config.sample_dt
    f_series = np.empty(n_samples)
    sample_idx = 0

    if config.policy is not None:
        fixed = (config.policy.m, config.policy.tau)
        strat_cache: list[Optional[tuple[int, int]]] = [fixed] * (n + 1)
    else:
        strat_cache = [None] * (n + 1)

    attempts: Optional[list[tuple[int, int, int, bool]]] = [] if record_attempts else None

    uniform_mode = r == 1.0 and xi == 0.0
    p_prod = 1.0 / (1.0 + eps)
    inv_rate = 1.0 / (n * (1.0 + eps))
    t_end = config.t_end
    log1p = math.log1p
    n_minus_1 = n - 1

    buf = rng.random(_POOL).tolist()
    pos = 0
    refill_guard = _POOL - 80
    t = 0.0
    event_count = 0

    while True:
        if pos > refill_guard:
            buf = rng.random(_POOL).tolist()
            pos = 0
        u_dt = buf[pos]
        u_agent = buf[pos + 1]
        u_type = buf[pos + 2]
        pos += 3
        t_next = t - log1p(-u_dt) * inv_rate
        while sample_idx < n_samples and sample_times[sample_idx] < t_next:
            f_series[sample_idx] = n_func / n
            sample_idx += 1
        if t_next > t_end:
            break
        t = t_next
        i = int(u_agent * n)

        if u_type < p_prod:
            # Production attempt.
            n_before = n_func
            strat = strat_cache[n_before]
            if strat is None:
                strat = tuple(best_response(params, n_before / n))
                strat_cache[n_before] = strat
            m, tau = strat
            old = suppliers[i]
            if m > 0:
                if m > _POOL - pos:
                    tail = buf[pos:]
                    buf = rng.random(_POOL).tolist()
                    pos = 0
                    draws = tail + buf[: m - len(tail)]
                    pos = m - len(tail)
                else:
                    draws = buf[pos : pos + m]
                    pos += m
                if uniform_mode:
                    idx = []
                    for u in draws:
                        j = int(u * n_minus_1)
                        if j >= i:
                            j += 1
                        idx.append(j)
                else:
                    w = base_weight.copy()
                    if r != 1.0:
                        seen: set[int] = set()
                        deliv_flags = delivered[i]
                        for pos_j, j in enumerate(old):
                            if deliv_flags[pos_j] and j not in seen:
                                seen.add(j)
                                w[j] *= r
                    w[i] = 0.0
                    cum = np.cumsum(w)
                    total = cum[-1]
                    picked = np.searchsorted(
                        cum, np.array(draws) * total, side="right"
                    )
                    idx = [int(j) for j in picked]
                new_deliv = [bool(functional[j]) for j in idx]
                for j in old:
                    customer_count[j] -= 1
                for j in idx:
                    customer_count[j] += 1
                if xi != 0.0:
                    touched = set(old)
                    touched.update(idx)
                    if xi == 1.0:
                        for j in touched:
                            base_weight[j] = 1.0 + customer_count[j]
                    else:
                        for j in touched:
                            base_weight[j] = (1.0 + customer_count[j]) ** xi
                suppliers[i] = idx
                delivered[i] = new_deliv
            else:
                if old:
                    for j in old:
                        customer_count[j] -= 1
                    if xi != 0.0:
                        for j in set(old):
                            base_weight[j] = (1.0 + customer_count[j]) ** xi
                    suppliers[i] = []
                    delivered[i] = []
                new_deliv = []
            if tau > 0:
                success = sum(new_deliv) >= tau
                if success != functional[i]:
                    functional[i] = success
                    n_func += 1 if success else -1
                if attempts is not None:
                    attempts.append((n_before, m, tau, success))
            elif attempts is not None:
                attempts.append((n_before, m, tau, bool(functional[i])))
            # tau == 0: state unchanged, mirroring zero mean-field drift.
        else:
            # Exogenous failure.
            if functional[i]:
                functional[i] = False
                n_func -= 1

        event_count += 1
        if validate_every and event_count % validate_every == 0:
            state = AbmState(t, functional, suppliers, delivered, customer_count)
            verify_bookkeeping(state)
            if int(np.count_nonzero(functional)) != n_func:
                raise AssertionError("functional counter out of sync")

    while sample_idx < n_samples:
        f_series[sample_idx] = n_func / n
        sample_idx += 1

    final = AbmState(
        time=t_end,
        functional=functional,
        suppliers=suppliers,
        delivered=delivered,
        customer_count=customer_count,
    )
    return RunResult(sample_times, f_series, final, attempts)


def replica_seed(seed: int, replica: int) -> int:
    """Deterministic 64-bit seed for one replica of an ensemble."""
    return int(np.random.SeedSequence((seed, replica)).generate_state(1, np.uint64)[0])


@dataclass
class EnsembleSummary:
    sample_times: np.ndarray
    mean_f: np.ndarray
    sd_f: np.ndarray
    sem_f: np.ndarray
    n_replicas: int
    final_f_samples: np.ndarray


def _run_for_pool(config: AbmConfig) -> np.ndarray:
    return run(config).f_series


def run_replicas(
    config: AbmConfig,
    n_replicas: int,
    seeds: Optional[Sequence[int]] = None,
) -> EnsembleSummary:
    """Aggregate ``n_replicas`` independent runs into mean/sd/sem series.

    Per-replica seeds derive deterministically from ``(config.seed,
    replica_index)`` unless ``seeds`` overrides them.  Set the
    ``DISRUPTSIM_THREADS`` environment variable above 1 to run replicas
    in a process pool; aggregation is order-independent either way.
    """
    if n_replicas < 2:
        raise ValueError(f"n_replicas must be >= 2, got {n_replicas}")
    if seeds is None:
        seeds = [replica_seed(config.seed, k) for k in range(n_replicas)]
    elif len(seeds) != n_replicas:
        raise ValueError("seeds, when given, must have length n_replicas")
    configs = [replace(config, seed=s) for s in seeds]

    workers = int(os.environ.get("DISRUPTSIM_THREADS", "1"))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            series = list(pool.map(_run_for_pool, configs))
    else:
        series = [run(c).f_series for c in configs]

    stack = np.vstack(series)
    mean_f = stack.mean(axis=0)
    sd_f = stack.std(axis=0, ddof=1)
    sem_f = sd_f / math.sqrt(n_replicas)
    n_samples = int(math.floor(config.t_end / config.sample_dt + 1e-9)) + 1
    sample_times = np.arange(n_samples) * config.sample_dt
    return EnsembleSummary(
        sample_times=sample_times,
        mean_f=mean_f,
        sd_f=sd_f,
        sem_f=sem_f,
        n_replicas=n_replicas,
        final_f_samples=stack[:, -1].copy(),
    )


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_timeseries_csv(summary: EnsembleSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,mean_f,sd_f,sem_f\n")
        for k in range(len(summary.sample_times)):
            fh.write(
                f"{_fmt(float(summary.sample_times[k]))},{_fmt(float(summary.mean_f[k]))},"
                f"{_fmt(float(summary.sd_f[k]))},{_fmt(float(summary.sem_f[k]))}\n"
            )


def write_finals_csv(summary: EnsembleSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replica,final_f\n")
        for k, v in enumerate(summary.final_f_samples):
            fh.write(f"{k},{_fmt(float(v))}\n")
