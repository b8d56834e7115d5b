"""Correlation and t-tests with a self-contained Student-t distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _CF_TINY else _CF_TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _CF_TINY else _CF_TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def student_t_sf(t: float, df: float) -> float:
    return student_t_cdf(-t, df)


def t_critical(alpha: float, df: float, tails: int = 2) -> float:
    """Positive t with upper-tail probability alpha / tails (bisection)."""
    target = alpha / tails
    lo, hi = 0.0, 1.0
    while student_t_sf(hi, df) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_one_tail: float  # smaller tail, as spreadsheet t-test output reports it
    p_two_tail: float
    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    n_a: int
    n_b: int
    pearson_r: float | None = None


def _mean(x) -> float:
    return math.fsum(x) / len(x)


def _var(x, mean) -> float:
    return math.fsum((v - mean) ** 2 for v in x) / (len(x) - 1)


def _p_values(t, df):
    lower = student_t_cdf(t, df)
    one = min(lower, 1.0 - lower)
    return one, min(1.0, 2.0 * one)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"pearson needs equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 3:
        raise ValueError("pearson needs at least 3 observations")
    da = a - _mean(a)
    db = b - _mean(b)
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateError("pearson correlation undefined for a constant vector")
    return float(np.clip((da @ db) / math.sqrt(saa * sbb), -1.0, 1.0))


def paired_ttest(a, b) -> TTestResult:
    """t = mean(a - b) / (sd(a - b) / sqrt(n)), df = n - 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError(f"paired t-test needs equal-length vectors of size >= 2, got {a.shape}, {b.shape}")
    d = a - b
    n = d.size
    md = _mean(d)
    vd = _var(d, md)
    scale = max(1.0, float(np.max(np.abs(d))))
    if math.sqrt(vd) <= 1e-12 * scale:
        raise DegenerateError("paired differences have zero variance")
    t = md / math.sqrt(vd / n)
    one, two = _p_values(t, n - 1)
    ma, mb = _mean(a), _mean(b)
    r = pearson(a, b) if n >= 3 else None
    return TTestResult(t, n - 1, one, two, ma, mb, _var(a, ma), _var(b, mb), n, n, r)


def welch_ttest(a, b) -> TTestResult:
    """Unequal-variance two-sample t-test with Welch-Satterthwaite df."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 observations")
    ma, mb = _mean(a), _mean(b)
    va, vb = _var(a, ma), _var(b, mb)
    sa, sb = va / a.size, vb / b.size
    if sa + sb == 0.0:
        raise DegenerateError("both groups have zero variance")
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    one, two = _p_values(t, df)
    return TTestResult(t, df, one, two, ma, mb, va, vb, a.size, b.size)


def minmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise DegenerateError("min-max scaling of a constant vector")
    return (x - lo) / (hi - lo)
