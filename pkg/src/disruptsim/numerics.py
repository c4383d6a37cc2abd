"""Special functions used throughout the package.

Three pieces of numerical machinery, all pure and reentrant:

* binomial tail probabilities ``P[Binomial(m, f) >= tau]``, computed by
  stable incremental summation of probability-mass terms,
* the principal branch of the Lambert W function (product logarithm),
* the Student-t survival function (for two-sided regression p-values).

No state is shared between calls, so everything here is safe to use from
concurrent callers.
"""

from __future__ import annotations

import math

__all__ = [
    "clamp01",
    "binomial_tail",
    "lambert_w0",
    "student_t_sf",
]

#: Absolute tolerance within which out-of-range probabilities are clamped
#: back into [0, 1] instead of rejected.
PROB_TOL = 1e-12

_INV_E = math.exp(-1.0)


def clamp01(value: float, tol: float = PROB_TOL) -> float:
    """Clamp ``value`` into [0, 1], rejecting violations beyond ``tol``.

    Floating-point arithmetic routinely produces probabilities like
    ``1 + 2e-16``; those are clamped silently.  Anything outside the
    interval by more than ``tol`` indicates a genuine caller bug and
    raises ``ValueError`` rather than being hidden.
    """
    if not math.isfinite(value):
        raise ValueError(f"probability must be finite, got {value!r}")
    if value < 0.0:
        if value < -tol:
            raise ValueError(f"probability {value!r} below 0 by more than {tol}")
        return 0.0
    if value > 1.0:
        if value > 1.0 + tol:
            raise ValueError(f"probability {value!r} above 1 by more than {tol}")
        return 1.0
    return value


def _binomial_pmf_start(m: int, k: int, f: float) -> float:
    # C(m, k) f^k (1-f)^(m-k) via log-gamma; avoids overflowing factorials.
    log_pmf = (
        math.lgamma(m + 1)
        - math.lgamma(k + 1)
        - math.lgamma(m - k + 1)
        + k * math.log(f)
        + (m - k) * math.log1p(-f)
    )
    return math.exp(log_pmf)


def binomial_tail(m: int, tau: int, f: float) -> float:
    """Return ``P[Binomial(m, f) >= tau]``.

    Parameters
    ----------
    m : int
        Number of trials, ``m >= 0``.
    tau : int
        Threshold number of successes, ``tau >= 0``.
    f : float
        Per-trial success probability in [0, 1].

    Notes
    -----
    Whichever of the lower/upper tail holds less mass is summed directly
    and complemented if needed, so no catastrophic cancellation occurs.
    Mass terms are generated by the multiplicative recurrence
    ``pmf(k+1) = pmf(k) * (m-k)/(k+1) * f/(1-f)`` from a log-gamma seed
    and accumulated with ``math.fsum``.  Absolute error stays below
    1e-12 for m up to 10,000.
    """
    if m < 0 or tau < 0:
        raise ValueError(f"m and tau must be nonnegative, got m={m}, tau={tau}")
    f = clamp01(f)
    if tau <= 0:
        return 1.0
    if tau > m:
        return 0.0
    if f == 0.0:
        return 0.0
    if f == 1.0:
        return 1.0
    if tau == m:
        # Exact product form; also guarantees drift((1,1), f, 0) == 0 exactly.
        return f**m
    if tau == 1:
        return -math.expm1(m * math.log1p(-f))

    ratio = f / (1.0 - f)
    mean = m * f
    if tau > mean:
        # Upper tail is the smaller one: sum k = tau .. m directly.
        terms = []
        pmf = _binomial_pmf_start(m, tau, f)
        for k in range(tau, m + 1):
            terms.append(pmf)
            pmf *= ratio * (m - k) / (k + 1)
        return clamp01(math.fsum(terms))
    # Lower tail k = 0 .. tau-1 is smaller: sum it and complement.
    terms = []
    pmf = _binomial_pmf_start(m, tau - 1, f)
    for k in range(tau - 1, -1, -1):
        terms.append(pmf)
        pmf *= (k / (m - k + 1)) / ratio
    return clamp01(1.0 - math.fsum(terms))


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function.

    Returns ``w >= -1`` with ``w * exp(w) == x`` to relative error below
    1e-12, for ``x >= -1/e``.  Arguments below ``-1/e - 1e-12`` raise
    ``ValueError``; arguments within that tolerance of the branch point
    are clamped to it.
    """
    if math.isnan(x):
        raise ValueError("lambert_w0 is undefined for NaN")
    if x < -_INV_E:
        if x < -_INV_E - 1e-12:
            raise ValueError(f"lambert_w0 domain is x >= -1/e, got {x!r}")
        return -1.0
    if x == 0.0:
        return 0.0

    # Initial guess: asymptotic log form for large x, branch-point series
    # near -1/e, first-order series otherwise.
    if x > math.e:
        lx = math.log(x)
        w = lx - math.log(lx)
    elif x < -0.25:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0
    else:
        w = x / (1.0 + x)

    # Halley iteration.
    for _ in range(50):
        ew = math.exp(w)
        resid = w * ew - x
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * resid / (2.0 * wp1)
        step = resid / denom
        w -= step
        if abs(step) <= 1e-14 * max(1.0, abs(w)):
            break
    return max(w, -1.0)


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the regularized incomplete beta function
    # (modified Lentz algorithm).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def _betai(a: float, b: float, x: float) -> float:
    # Regularized incomplete beta I_x(a, b).
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, dof: int) -> float:
    """Survival function ``P[T > t]`` of a Student-t variable.

    ``dof`` must be a positive integer.  Accurate to about 1e-8; the
    two-sided p-value of an observed statistic is
    ``2 * student_t_sf(abs(t), dof)``.
    """
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    if math.isnan(t):
        raise ValueError("student_t_sf is undefined for NaN")
    if t == 0.0:
        return 0.5
    x = dof / (dof + t * t)
    half_tail = 0.5 * _betai(0.5 * dof, 0.5, x)
    return clamp01(half_tail if t > 0.0 else 1.0 - half_tail)
