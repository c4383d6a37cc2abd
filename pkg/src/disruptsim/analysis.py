"""Quadratic least-squares fits with classical inference.

Used to quantify the inverted-U relationship between complexity and
buffers: on model sweeps (buffer against best-response complexity) and,
when a country-level dataset is available, on input inventories against
economic complexity.  A relationship is "inverted-U" when the fitted
quadratic coefficient is negative.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .numerics import student_t_sf

__all__ = [
    "FitResult",
    "CountryRecord",
    "InvertedUReport",
    "RankDeficiencyError",
    "MalformedHeaderError",
    "ols_quadratic",
    "load_country_csv",
    "inverted_u_report",
    "write_fit_json",
]


class RankDeficiencyError(ValueError):
    """The quadratic design matrix is singular (to 1e-10 relative tolerance)."""


class MalformedHeaderError(ValueError):
    """The CSV header lacks a required column."""


@dataclass(frozen=True)
class FitResult:
    """OLS fit of ``y = c0 + c1*x + c2*x**2`` with classical inference.

    ``t_stats[i] = coefficients[i] / std_errors[i]`` and
    ``p_values[i] = 2 * student_t_sf(|t_stats[i]|, n_obs - 3)``.  On a
    perfect fit the residual variance is zero, standard errors collapse
    to 0 and the corresponding p-values to 0 (or 1 for a zero
    coefficient).
    """

    coefficients: tuple[float, float, float]
    std_errors: tuple[float, float, float]
    t_stats: tuple[float, float, float]
    p_values: tuple[float, float, float]
    r_squared: float
    n_obs: int


def ols_quadratic(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    """Least-squares quadratic fit with homoskedastic standard errors.

    ``xs`` is centred before the design matrix is formed (conditioning
    only; coefficients are mapped back to the raw basis).  Raises
    :class:`RankDeficiencyError` when fewer than 3 distinct x values are
    present and ``ValueError`` on length mismatch or ``n < 4``.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"xs and ys must be equal-length 1-D sequences, got {x.shape} vs {y.shape}")
    n = len(x)
    if n < 4:
        raise ValueError(f"need at least 4 observations, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("xs and ys must be finite")

    mu = x.mean()
    xc = x - mu
    design = np.column_stack([np.ones(n), xc, xc * xc])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficiencyError(
            "quadratic design matrix is rank deficient; xs carry fewer than 3 distinct values"
        )

    coef_c, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef_c
    ssr = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    dof = n - 3
    sigma2 = ssr / dof
    cov_c = sigma2 * np.linalg.inv(design.T @ design)

    # Map centred-basis coefficients a0 + a1*(x-mu) + a2*(x-mu)^2 back to
    # the raw basis c0 + c1*x + c2*x^2.
    transform = np.array(
        [
            [1.0, -mu, mu * mu],
            [0.0, 1.0, -2.0 * mu],
            [0.0, 0.0, 1.0],
        ]
    )
    coef = transform @ coef_c
    cov = transform @ cov_c @ transform.T
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))

    t_stats = []
    p_values = []
    for c, s in zip(coef, se):
        if s > 0.0:
            t = c / s
            p = 2.0 * student_t_sf(abs(t), dof)
        else:
            t = math.inf if c != 0.0 else 0.0
            p = 0.0 if c != 0.0 else 1.0
        t_stats.append(float(t))
        p_values.append(float(p))

    r2 = 0.0 if sst == 0.0 else 1.0 - ssr / sst
    return FitResult(
        coefficients=tuple(float(c) for c in coef),
        std_errors=tuple(float(s) for s in se),
        t_stats=tuple(t_stats),
        p_values=tuple(p_values),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        n_obs=n,
    )


@dataclass(frozen=True)
class CountryRecord:
    country_id: str
    inventory_days: float
    eci: float


def load_country_csv(
    path,
    country_col: str = "country",
    inventory_col: str = "inventory_days",
    eci_col: str = "eci",
) -> tuple[list[CountryRecord], int]:
    """Parse a country-level CSV into records, skipping unusable rows.

    Returns ``(records, n_skipped)``; rows with a missing or non-numeric
    inventory or ECI value (or negative inventory) are skipped and
    counted.  Raises ``FileNotFoundError``,
    :class:`MalformedHeaderError` when a required column is absent, and
    ``ValueError`` when every row is skipped.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (country_col, inventory_col, eci_col):
            if col not in header:
                raise MalformedHeaderError(f"column {col!r} not in header {header}")
        records: list[CountryRecord] = []
        skipped = 0
        for row in reader:
            try:
                inv = float(row[inventory_col])
                eci = float(row[eci_col])
            except (TypeError, ValueError):
                skipped += 1
                continue
            if not (math.isfinite(inv) and math.isfinite(eci)) or inv < 0.0:
                skipped += 1
                continue
            records.append(CountryRecord(str(row[country_col]), inv, eci))
    if not records:
        raise ValueError(f"no usable rows in {path} ({skipped} skipped)")
    return records, skipped


@dataclass(frozen=True)
class InvertedUReport:
    fit: FitResult
    is_inverted_u: bool


def inverted_u_report(xs: Sequence[float], ys: Sequence[float]) -> InvertedUReport:
    """Fit a quadratic and report whether it opens downward."""
    fit = ols_quadratic(xs, ys)
    return InvertedUReport(fit=fit, is_inverted_u=fit.coefficients[2] < 0.0)


def write_fit_json(fit: FitResult, path, skipped_rows: Optional[int] = None) -> None:
    import json

    payload = {
        "coefficients": list(fit.coefficients),
        "std_errors": list(fit.std_errors),
        "t_stats": list(fit.t_stats),
        "p_values": list(fit.p_values),
        "r_squared": fit.r_squared,
        "n_obs": fit.n_obs,
        "skipped_rows": skipped_rows if skipped_rows is not None else 0,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
