"""Normality, variance-homogeneity, ANOVA and Tukey HSD tests, plus plot data.

The tests are implemented directly: Shapiro-Wilk through Royston's
approximation (algorithm AS R94), F-distribution tail probabilities through a
continued-fraction regularized incomplete beta, and the studentized range
distribution through Gauss-Legendre quadrature.  Only the standard normal
CDF and quantile are taken from :mod:`scipy.special`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri


class DegenerateInput(ValueError):
    """The data carry no variation the statistic can work with."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: tuple[int, int] | None = None

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "df": list(self.df) if self.df else None}


@dataclass(frozen=True)
class PairwiseComparison:
    group_a: str
    group_b: str
    mean_diff: float
    p_adj: float
    reject: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# special functions


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Upper tail P(F > f) of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gauss_legendre(lo: float, hi: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges)[:, None] / 2.0
    mid = (edges[:-1] + edges[1:])[:, None] / 2.0
    return (mid + half * _GL_X).ravel(), (half * _GL_W).ravel()


_Z_NODES, _Z_WEIGHTS = _gauss_legendre(-8.5, 8.5, 16)
_Z_PDF = np.exp(-0.5 * _Z_NODES**2) / math.sqrt(2 * math.pi)


def _range_cdf(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k iid standard normals <= w), elementwise over ``w``."""
    w = np.asarray(w, dtype=float)[..., None]
    inner = np.clip(ndtr(_Z_NODES) - ndtr(_Z_NODES - w), 0.0, 1.0) ** (k - 1)
    return k * np.sum(_Z_WEIGHTS * _Z_PDF * inner, axis=-1)


def studentized_range_cdf(q, k: int, df: float):
    """CDF of the studentized range Q(k, df) by two-level numerical quadrature.

    The outer integral runs over the scaled chi variable ``s = sqrt(X/df)``,
    ``X ~ chi^2(df)``; the inner one over the normal range distribution.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.zeros_like(q_arr)
    pos = q_arr > 0
    if math.isinf(df):
        out[pos] = _range_cdf(q_arr[pos], k)
    elif pos.any():
        if df <= 0:
            raise ValueError("df must be positive")
        spread = 10.0 / math.sqrt(df)
        lo, hi = max(0.0, 1.0 - spread), 1.0 + spread
        s, ws = _gauss_legendre(lo, hi, 24)
        log_dens = (0.5 * df * math.log(df) - math.lgamma(0.5 * df) - (0.5 * df - 1.0) * math.log(2.0)
                    + (df - 1.0) * np.log(s) - 0.5 * df * s**2)
        dens = ws * np.exp(log_dens)
        inner = _range_cdf(q_arr[pos][:, None] * s[None, :], k)
        out[pos] = inner @ dens
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(q) else float(out[0])


def studentized_range_sf(q, k: int, df: float):
    return 1.0 - studentized_range_cdf(q, k, df)


def studentized_range_critical(k: int, df: float, alpha: float = 0.05) -> float:
    """Upper-alpha critical value q such that P(Q > q) = alpha."""
    return brentq(lambda q: studentized_range_cdf(q, k, df) - (1.0 - alpha), 1e-6, 200.0, xtol=1e-10)


# ---------------------------------------------------------------------------
# Shapiro-Wilk (Royston 1995, AS R94)

_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def _poly(coef: Sequence[float], x: float) -> float:
    result = 0.0
    for c in reversed(coef):
        result = result * x + c
    return result


def shapiro_coefficients(n: int) -> np.ndarray:
    """Royston's approximation to the Shapiro-Wilk weights, antisymmetric, length n."""
    if n < 3:
        raise ValueError("n must be >= 3")
    half = n // 2
    if n == 3:
        a_half = np.array([math.sqrt(0.5)])
    else:
        m = ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))  # lower-tail scores, negative
        summ2 = 2.0 * float(np.sum(m**2))
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_SW_C1, rsn) - m[0] / ssumm2
        if n > 5:
            a2 = -m[1] / ssumm2 + _poly(_SW_C2, rsn)
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2))
            a_half = -m / fac
            a_half[1] = a2
        else:
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
            a_half = -m / fac
        a_half[0] = a1
    a = np.zeros(n)
    a[:half] = -a_half
    a[n - half:] = a_half[::-1]
    return a


def shapiro_wilk(xs: Sequence[float]) -> TestResult:
    """Shapiro-Wilk W and its p-value for 3 <= n <= 5000."""
    x = np.sort(np.asarray(xs, dtype=float))
    n = x.size
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk requires 3 <= n <= 5000, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    if x[-1] - x[0] < 1e-19 * max(1.0, abs(x[0])):
        raise DegenerateInput("all values are identical")
    a = shapiro_coefficients(n)
    xc = (x - x.mean()) / (x[-1] - x[0])
    ac = a - a.mean()
    sax = float(np.dot(ac, xc))
    ssa = float(np.dot(ac, ac))
    ssx = float(np.dot(xc, xc))
    w = min(1.0, sax * sax / (ssa * ssx))
    w1 = 1.0 - w

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return TestResult(w, float(min(1.0, max(0.0, p))))
    if w1 <= 0.0:
        return TestResult(w, 1.0)
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_SW_G, n)
        if y >= gamma:
            return TestResult(w, 1e-99)
        y = -math.log(gamma - y)
        mean = _poly(_SW_C3, n)
        sd = math.exp(_poly(_SW_C4, n))
    else:
        ln_n = math.log(n)
        mean = _poly(_SW_C5, ln_n)
        sd = math.exp(_poly(_SW_C6, ln_n))
    p = float(1.0 - ndtr((y - mean) / sd))
    return TestResult(w, min(1.0, max(0.0, p)))


# ---------------------------------------------------------------------------
# ANOVA family


def _as_groups(groups: Sequence[Sequence[float]], min_size: int = 2) -> list[np.ndarray]:
    arrs = [np.asarray(g, dtype=float) for g in groups]
    if len(arrs) < 2:
        raise ValueError("need at least two groups")
    for i, g in enumerate(arrs):
        if g.size < min_size:
            raise DegenerateInput(f"group {i} has {g.size} values; need at least {min_size}")
    return arrs


def _sums_of_squares(arrs: list[np.ndarray]) -> tuple[float, float, int, int]:
    n_total = sum(g.size for g in arrs)
    grand = math.fsum(float(v) for g in arrs for v in g) / n_total
    ss_between = math.fsum(g.size * (float(g.mean()) - grand) ** 2 for g in arrs)
    ss_within = math.fsum(float(np.sum((g - g.mean()) ** 2)) for g in arrs)
    return ss_between, ss_within, len(arrs) - 1, n_total - len(arrs)


def anova_oneway(groups: Sequence[Sequence[float]]) -> TestResult:
    """One-way ANOVA F test.

    Zero within-group variance with unequal means gives ``F = inf, p = 0``;
    with equal means as well the test is undefined and raises
    :class:`DegenerateInput`.
    """
    arrs = _as_groups(groups)
    ssb, ssw, df1, df2 = _sums_of_squares(arrs)
    if ssw == 0.0:
        if ssb == 0.0:
            raise DegenerateInput("no variation within or between groups")
        return TestResult(math.inf, 0.0, (df1, df2))
    f = (ssb / df1) / (ssw / df2)
    return TestResult(f, f_sf(f, df1, df2), (df1, df2))


def levene(groups: Sequence[Sequence[float]], center: str = "mean") -> TestResult:
    """Levene's test: ANOVA on absolute deviations from each group's center."""
    if center not in ("mean", "median"):
        raise ValueError("center must be 'mean' or 'median'")
    arrs = _as_groups(groups)
    pick = np.mean if center == "mean" else np.median
    devs = [np.abs(g - pick(g)) for g in arrs]
    return anova_oneway(devs)


def tukey_hsd(
    groups: Sequence[Sequence[float]],
    labels: Sequence[str] | None = None,
    alpha: float = 0.05,
) -> list[PairwiseComparison]:
    """All pairwise Tukey-Kramer comparisons.

    ``mean_diff`` is ``mean(group_b) - mean(group_a)`` for pairs taken in
    label order; ``p_adj`` comes from the studentized range distribution
    with (k, N - k) degrees of freedom.
    """
    arrs = _as_groups(groups)
    k = len(arrs)
    labels = list(labels) if labels is not None else [str(i) for i in range(k)]
    if len(labels) != k:
        raise ValueError("one label per group required")
    _, ssw, _, df = _sums_of_squares(arrs)
    mse = ssw / df
    means = [float(g.mean()) for g in arrs]
    if mse == 0.0 and len(set(means)) == 1:
        raise DegenerateInput("no variation within or between groups")
    pairs = list(combinations(range(k), 2))
    diffs = np.array([means[j] - means[i] for i, j in pairs])
    se = np.array([math.sqrt(mse / 2.0 * (1.0 / arrs[i].size + 1.0 / arrs[j].size)) for i, j in pairs])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(se > 0, np.abs(diffs) / np.where(se > 0, se, 1.0), np.where(diffs == 0, 0.0, np.inf))
    p = np.ones_like(q)
    finite = np.isfinite(q)
    p[~finite] = 0.0
    if finite.any():
        p[finite] = 1.0 - studentized_range_cdf(q[finite], k, df)
    p = np.clip(p, 0.0, 1.0)
    return [
        PairwiseComparison(labels[i], labels[j], float(d), float(pv), bool(pv < alpha))
        for (i, j), d, pv in zip(pairs, diffs, p)
    ]


# ---------------------------------------------------------------------------
# plot data


def qq_points(xs: Sequence[float]) -> list[tuple[float, float]]:
    """(normal quantile, sorted value) pairs at Blom plotting positions."""
    x = np.sort(np.asarray(xs, dtype=float))
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 values")
    theo = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    return [(float(t), float(v)) for t, v in zip(theo, x)]


def silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def density_points(
    xs: Sequence[float], bandwidth: float | None = None, grid_size: int = 512, tail: float = 4.0
) -> list[tuple[float, float]]:
    """Gaussian kernel density on an even grid over [min - tail*h, max + tail*h]."""
    x = np.asarray(xs, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 values")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DegenerateInput("bandwidth is zero; values are identical")
    grid = np.linspace(x.min() - tail * h, x.max() + tail * h, grid_size)
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z**2).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return [(float(g), float(d)) for g, d in zip(grid, dens)]


def trapezoid(points: Sequence[tuple[float, float]]) -> float:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
