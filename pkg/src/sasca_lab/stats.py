"""Binomial interval statistics."""

from __future__ import annotations

from scipy.stats import beta
from statsmodels.stats.proportion import proportion_confint

__all__ = ["wilson_ci", "clopper_pearson_upper"]


def _check(successes: int, n: int) -> None:
    if n < 1 or not 0 <= successes <= n:
        raise ValueError(f"need 0 <= successes <= n and n >= 1, got ({successes}, {n})")


def wilson_ci(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    _check(successes, n)
    lo, hi = proportion_confint(successes, n, alpha=1 - confidence, method="wilson")
    # guard float round-off at the boundaries
    p = successes / n
    return float(min(max(lo, 0.0), p)), float(min(max(hi, p), 1.0))


def clopper_pearson_upper(successes: int, n: int, confidence: float = 0.95) -> float:
    """One-sided exact upper bound."""
    _check(successes, n)
    if successes == n:
        return 1.0
    return float(beta.ppf(confidence, successes + 1, n - successes))
