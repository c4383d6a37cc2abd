"""The agents' decision problem.

Each agent picks a production strategy ``(m, tau)``: attempt to procure
inputs from ``m`` suppliers, succeed if at least ``tau`` of them deliver.
Given the economy-wide fraction ``f`` of functional suppliers, the payoff
of a strategy is

    utility(m, tau) = P[Binomial(m, f) >= tau] * tau**beta - alpha * m,

where ``alpha`` is the marginal cost per attempted input and ``beta``
the returns-to-complexity exponent.  The maximiser over all nonnegative
integer pairs is the *best response*.

The maximiser can be found exactly because only finitely many pairs can
ever be optimal: any best response has ``m = 0`` or
``0 < tau <= m < tau**beta / alpha``, the diagonal ``m = tau`` is further
capped by a Lambert-W bound, and at ``f = 1`` the optimum is the floor or
ceiling of ``gamma = (beta/alpha)**(1/(1-beta))``.  ``candidate_set``
enumerates that finite set; ``best_response`` maximises utility over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .numerics import binomial_tail, clamp01, lambert_w0

__all__ = [
    "ModelParams",
    "Strategy",
    "Breakpoints",
    "utility",
    "candidate_set",
    "best_response",
    "analytic_breakpoints",
]


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: cost per input, returns to complexity, failure rate.

    Attributes
    ----------
    alpha : float
        Marginal cost per attempted input (numeraire units), > 0.
    beta : float
        Returns-to-complexity exponent, in the open interval (0, 1).
    eps : float
        Exogenous per-agent failure rate, >= 0.
    """

    alpha: float
    beta: float
    eps: float = 0.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not (self.eps >= 0.0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be nonnegative and finite, got {self.eps!r}")

    @property
    def m_bound(self) -> float:
        """Upper bound ``alpha**(-1/(1-beta))`` on any optimal m > 0."""
        return self.alpha ** (-1.0 / (1.0 - self.beta))


class Strategy(NamedTuple):
    """A production strategy: attempt ``m`` inputs, require ``tau`` of them."""

    m: int
    tau: int

    @property
    def buffer(self) -> int:
        """Redundancy ``m - tau``: suppliers arranged beyond strict need."""
        return self.m - self.tau


WITHDRAW = Strategy(0, 0)

# Candidate enumeration is O(m_bound^2); refuse parameter combinations for
# which the bound alpha**(-1/(1-beta)) explodes beyond any plotted regime.
_M_CAP_LIMIT = 4000


def _m_cap(params: ModelParams) -> int:
    bound = params.m_bound
    if bound > _M_CAP_LIMIT:
        raise ValueError(
            f"candidate strategies up to m <= {bound:.3g} are infeasible to "
            f"enumerate (limit {_M_CAP_LIMIT}); alpha={params.alpha}, "
            f"beta={params.beta} is outside the supported regime"
        )
    return int(math.floor(bound + 1e-12))


def utility(s: Strategy, f: float, params: ModelParams) -> float:
    """Expected payoff of strategy ``s`` when a fraction ``f`` is functional.

    The empty strategy (0, 0) is worth exactly 0 (``0**beta`` is taken
    as 0 so that withdrawing from the economy has zero payoff).
    """
    m, tau = s
    if m < 0 or tau < 0:
        raise ValueError(f"strategy components must be nonnegative, got {s}")
    f = clamp01(f)
    if tau == 0:
        return -params.alpha * m if m > 0 else 0.0
    return binomial_tail(m, tau, f) * tau**params.beta - params.alpha * m


def _diagonal_cap(params: ModelParams, f: float) -> float:
    """Largest diagonal strategy value for 0 < f < 1.

    ``m = tau`` can only be optimal while ``f**m * m**beta > alpha * m``;
    solving the equality gives the product-logarithm bound
    ``m < (beta-1)/log(f) * W((1/alpha)**(1/(1-beta)) * log(f)/(beta-1))``.
    """
    log_f = math.log(f)
    arg = (1.0 / params.alpha) ** (1.0 / (1.0 - params.beta)) * log_f / (params.beta - 1.0)
    return (params.beta - 1.0) / log_f * lambert_w0(arg)


def _gamma(params: ModelParams) -> float:
    return (params.beta / params.alpha) ** (1.0 / (1.0 - params.beta))


def candidate_set(params: ModelParams, f: float) -> list[Strategy]:
    """All strategies that could be a best response at functional fraction ``f``.

    Three cases:

    * ``f == 0``: only withdrawing, ``[(0, 0)]``.
    * ``f == 1``: the floor and ceiling of ``gamma = (beta/alpha)**(1/(1-beta))``
      on the diagonal.
    * ``0 < f < 1``: every ``(m, tau)`` with ``0 <= m <= alpha**(-1/(1-beta))``
      where either ``m == tau`` passes the Lambert-W diagonal bound, or
      ``0 < tau < m < tau**beta / alpha``; plus (0, 0).

    The result is duplicate-free and sorted lexicographically by (m, tau).
    """
    f = clamp01(f)
    if f == 0.0:
        return [WITHDRAW]
    if f == 1.0:
        g = _gamma(params)
        lo, hi = int(math.floor(g)), int(math.ceil(g))
        out = {Strategy(lo, lo), Strategy(hi, hi)}
        return sorted(out)

    m_cap = _m_cap(params)
    out = {WITHDRAW}
    diag_cap = _diagonal_cap(params, f)
    for m in range(1, m_cap + 1):
        if m < diag_cap:
            out.add(Strategy(m, m))
    alpha = params.alpha
    beta = params.beta
    for tau in range(1, m_cap + 1):
        upper = tau**beta / alpha
        m_hi = min(m_cap, int(math.ceil(upper)))
        for m in range(tau + 1, m_hi + 1):
            if m < upper:
                out.add(Strategy(m, tau))
    return sorted(out)


class _CandidateTable:
    """Vectorised best-response evaluation for fixed (alpha, beta).

    The superset of possibly-optimal strategies (``m = 0`` or
    ``0 < tau <= m < tau**beta/alpha``) does not depend on ``f``, so it is
    enumerated once and utilities for all members are evaluated per query
    with a binomial-tail recurrence table.  Results are identical to
    maximising ``utility`` over ``candidate_set`` member by member: the
    extra diagonal members admitted here (those failing the Lambert-W
    bound) have utility <= 0 and can never displace (0, 0) under the
    lexicographic tie rule.
    """

    def __init__(self, params: ModelParams) -> None:
        self.params = params
        m_cap = _m_cap(params)
        pairs = [(0, 0)]
        for tau in range(1, m_cap + 1):
            upper = tau**params.beta / params.alpha
            m_hi = min(m_cap, int(math.ceil(upper)))
            for m in range(tau, m_hi + 1):
                if m == tau or m < upper:
                    pairs.append((m, tau))
        pairs.sort()
        self.m_arr = np.array([p[0] for p in pairs], dtype=np.intp)
        self.tau_arr = np.array([p[1] for p in pairs], dtype=np.intp)
        self.m_cap = m_cap
        self.gain = np.where(self.tau_arr > 0, self.tau_arr.astype(float) ** params.beta, 0.0)
        self.cost = params.alpha * self.m_arr.astype(float)

    def _tails(self, f: float) -> np.ndarray:
        # T[m, tau] = P[Binomial(m, f) >= tau] by the Pascal-style recurrence
        # T[m, tau] = f*T[m-1, tau-1] + (1-f)*T[m-1, tau]; row 0 seeds tau=0.
        n = self.m_cap + 1
        table = np.zeros((n, n + 1))
        table[:, 0] = 1.0
        q = 1.0 - f
        for m in range(1, n):
            table[m, 1 : m + 1] = f * table[m - 1, 0:m] + q * table[m - 1, 1 : m + 1]
        return table

    def best(self, f: float) -> Strategy:
        f = clamp01(f)
        if f == 0.0:
            return WITHDRAW
        if f == 1.0:
            g = _gamma(self.params)
            lo, hi = int(math.floor(g)), int(math.ceil(g))
            best = WITHDRAW
            best_u = 0.0
            for k in (lo, hi):
                if k <= 0:
                    continue
                u = k**self.params.beta - self.params.alpha * k
                if u > best_u:
                    best, best_u = Strategy(k, k), u
            return best
        table = self._tails(f)
        utilities = table[self.m_arr, self.tau_arr] * self.gain - self.cost
        idx = int(np.argmax(utilities))  # first max = lexicographically smallest
        if utilities[idx] <= 0.0:
            return WITHDRAW
        m, tau = int(self.m_arr[idx]), int(self.tau_arr[idx])
        if m == 0:
            return WITHDRAW
        return Strategy(m, tau)


@lru_cache(maxsize=128)
def _table(params: ModelParams) -> _CandidateTable:
    return _CandidateTable(params)


def best_response(params: ModelParams, f: float) -> Strategy:
    """Utility-maximising strategy at functional fraction ``f``.

    Exact ties are broken lexicographically (smaller ``m``, then smaller
    ``tau``) under exact floating-point comparison; a maximiser of the
    form ``(0, tau)`` is reported as (0, 0).  When ``alpha >= 1`` even a
    fully functional economy cannot pay for a single input, so the best
    response at ``f = 1`` is (0, 0).
    """
    f = clamp01(f)
    if f == 1.0 and params.alpha >= 1.0:
        return WITHDRAW
    return _table(params).best(f)


@dataclass(frozen=True)
class Breakpoints:
    """Closed-form indifference boundaries of the best-response map.

    ``f_exit_trap``: the boundary ``f = alpha`` where (1, 1) starts to
    beat withdrawing (clamped to 1 when ``alpha >= 1``).

    ``f_11_22``: the classical closed form
    ``2**-(beta+1) * (1 - sqrt(1 - alpha * 2**(beta+2)))`` quoted for the
    boundary where strategies beyond (1, 1) take over; ``None`` when the
    discriminant is negative.  Note this form overstates the true
    boundary: exact maximisation hands the economy from (1, 1) to (2, 1)
    at ``(1 - sqrt(1 - 4*alpha))/2``, slightly below ``f_11_22``.
    """

    f_exit_trap: float
    f_11_22: Optional[float]


def analytic_breakpoints(params: ModelParams) -> Breakpoints:
    """Closed-form strategy-boundary locations for the given parameters."""
    f_exit = min(params.alpha, 1.0)
    disc = 1.0 - params.alpha * 2.0 ** (params.beta + 2.0)
    if disc < 0.0:
        f_11_22 = None
    else:
        f_11_22 = 2.0 ** (-(params.beta + 1.0)) * (1.0 - math.sqrt(disc))
    return Breakpoints(f_exit_trap=f_exit, f_11_22=f_11_22)
