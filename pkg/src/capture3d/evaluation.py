"""Usability-evaluation statistics: SUS scoring, one-way ANOVA from raw
observations or group summaries, and F-distribution tail probabilities.

Everything is pure computation; the ``eval`` CLI subcommand feeds it CSV
or JSON-summary input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InsufficientData, OutOfRangeItem

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-15
_ABS_TOL = 1e-12


@dataclass
class SusResponse:
    """Ten 1-5 answers, odd positions positively worded, even negatively."""

    items: list

    def __post_init__(self):
        if len(self.items) != 10:
            raise OutOfRangeItem(f"expected 10 items, got {len(self.items)}")
        for i, v in enumerate(self.items, start=1):
            if int(v) != v or not 1 <= int(v) <= 5:
                raise OutOfRangeItem(f"item {i} is {v}, must be an integer in [1, 5]")
        self.items = [int(v) for v in self.items]


@dataclass
class GroupSummary:
    n: int
    mean: float
    variance: float  # sample variance, n-1 denominator

    def __post_init__(self):
        if self.n < 2:
            raise InsufficientData("each group needs at least 2 observations")
        if self.variance < 0:
            raise InsufficientData("variance must be non-negative")


@dataclass
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float


def sus_score(response: SusResponse) -> float:
    """0-100 score: positive items contribute (score - 1), negative items
    (5 - score), and the sum is scaled by 2.5."""
    adjusted = 0
    for pos, value in enumerate(response.items, start=1):
        adjusted += (value - 1) if pos % 2 == 1 else (5 - value)
    return 2.5 * adjusted


def sus_mean(responses) -> float:
    if not responses:
        raise InsufficientData("no responses")
    return sum(sus_score(r) for r in responses) / len(responses)


def summarize(values) -> GroupSummary:
    """Sample summary with the n-1 variance denominator."""
    n = len(values)
    if n < 2:
        raise InsufficientData("each group needs at least 2 observations")
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return GroupSummary(n=n, mean=mean, variance=var)


def anova_from_summary(groups) -> AnovaResult:
    """Classical one-way ANOVA from per-group (n, mean, variance).

    SSB = sum n_i (mean_i - grand)^2, SSW = sum (n_i - 1) var_i.  When SSW
    is zero: identical means give F = 0, p = 1; differing means give the
    F = +inf sentinel with p = 0.
    """
    if len(groups) < 2:
        raise InsufficientData("ANOVA needs at least 2 groups")
    total_n = sum(g.n for g in groups)
    grand = sum(g.n * g.mean for g in groups) / total_n
    ssb = sum(g.n * (g.mean - grand) ** 2 for g in groups)
    ssw = sum((g.n - 1) * g.variance for g in groups)
    df_b = len(groups) - 1
    df_w = total_n - len(groups)
    if ssw <= 0.0:
        if ssb <= _ABS_TOL:
            return AnovaResult(f=0.0, df_between=df_b, df_within=df_w, p=1.0)
        return AnovaResult(f=math.inf, df_between=df_b, df_within=df_w, p=0.0)
    f = (ssb / df_b) / (ssw / df_w)
    return AnovaResult(f=f, df_between=df_b, df_within=df_w, p=f_survival(f, df_b, df_w))


def anova_from_raw(groups) -> AnovaResult:
    """One-way ANOVA from raw observation lists (>= 2 groups of >= 2)."""
    if len(groups) < 2:
        raise InsufficientData("ANOVA needs at least 2 groups")
    return anova_from_summary([summarize(g) for g in groups])


# --- F distribution ---------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < 1e-300:
        d = 1e-300
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < 1e-300:
            d = 1e-300
        c = 1.0 + aa / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < 1e-300:
            d = 1e-300
        c = 1.0 + aa / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    return h  # converged to machine noise; good to ~1e-12 absolute


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by continued fraction, abs tolerance about 1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, df_between: int, df_within: int) -> float:
    """Upper-tail probability P(F > f) for the F(df_between, df_within)
    distribution, computed directly in the complementary regime so large
    F values do not lose precision to cancellation."""
    if f < 0:
        raise ValueError("F statistic must be non-negative")
    if math.isinf(f):
        return 0.0
    if f == 0.0:
        return 1.0
    d1, d2 = float(df_between), float(df_within)
    x = d2 / (d2 + d1 * f)
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x)
