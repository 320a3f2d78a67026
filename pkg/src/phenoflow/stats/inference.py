"""Statistical tests used by the analysis tools.

Groups are passed as a mapping from group label to observations. All p-values
come from the native special functions in this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..errors import StatsError
from .special import f_sf, studentized_range_sf, t_sf_two_sided

GroupedSample = Mapping[str, Sequence[float]]


@dataclass
class AnovaResult:
    f_stat: float
    p_value: float
    df_between: int
    df_within: int
    ms_between: float
    ms_within: float
    group_labels: list[str]
    group_means: list[float]
    group_sizes: list[int]


@dataclass
class PairwiseComparison:
    group_a: str
    group_b: str
    mean_diff: float
    q: float
    p_adj: float
    significant: bool


@dataclass
class CorrelationResult:
    r: float
    p_value: float
    n: int


@dataclass
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    n: int


def _check_groups(groups: GroupedSample, min_size: int) -> dict[str, list[float]]:
    if len(groups) < 2:
        raise StatsError("at least two groups are required")
    clean: dict[str, list[float]] = {}
    for label, values in groups.items():
        vals = [float(v) for v in values]
        if any(not math.isfinite(v) for v in vals):
            raise StatsError(f"group {label!r} contains non-finite values")
        if len(vals) < min_size:
            raise StatsError(
                f"group {label!r} has {len(vals)} observation(s); need >= {min_size}"
            )
        clean[str(label)] = vals
    return clean


def _sums_of_squares(clean: dict[str, list[float]]) -> tuple[float, float, float]:
    all_vals = [v for vals in clean.values() for v in vals]
    grand = sum(all_vals) / len(all_vals)
    ss_between = sum(
        len(vals) * (sum(vals) / len(vals) - grand) ** 2 for vals in clean.values()
    )
    ss_within = sum(
        (v - sum(vals) / len(vals)) ** 2 for vals in clean.values() for v in vals
    )
    return ss_between, ss_within, grand


def one_way_anova(groups: GroupedSample) -> AnovaResult:
    """Fixed-effects one-way ANOVA across the given groups."""
    clean = _check_groups(groups, min_size=2)
    k = len(clean)
    n_total = sum(len(v) for v in clean.values())
    df_between = k - 1
    df_within = n_total - k
    ss_between, ss_within, _ = _sums_of_squares(clean)
    if ss_within <= 0.0:
        raise StatsError("zero variance within every group; p-value undefined")
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    f_stat = ms_between / ms_within
    p_value = f_sf(f_stat, df_between, df_within)
    return AnovaResult(
        f_stat=f_stat,
        p_value=p_value,
        df_between=df_between,
        df_within=df_within,
        ms_between=ms_between,
        ms_within=ms_within,
        group_labels=list(clean),
        group_means=[sum(v) / len(v) for v in clean.values()],
        group_sizes=[len(v) for v in clean.values()],
    )


def tukey_kramer(groups: GroupedSample, alpha: float = 0.05) -> list[PairwiseComparison]:
    """All pairwise comparisons with the Tukey-Kramer adjustment.

    Unequal group sizes use the Kramer standard error; with two groups the
    statistic reduces to sqrt(2) times the pooled t statistic.
    """
    if not (0.0 < alpha < 1.0):
        raise StatsError("alpha must be inside (0, 1)")
    clean = _check_groups(groups, min_size=2)
    anova = one_way_anova(clean)
    k = len(clean)
    labels = list(clean)
    out: list[PairwiseComparison] = []
    for i in range(k):
        for j in range(i + 1, k):
            a, b = labels[i], labels[j]
            va, vb = clean[a], clean[b]
            mean_diff = sum(va) / len(va) - sum(vb) / len(vb)
            se = math.sqrt(
                (anova.ms_within / 2.0) * (1.0 / len(va) + 1.0 / len(vb))
            )
            q = abs(mean_diff) / se
            p_adj = studentized_range_sf(q, k, anova.df_within)
            out.append(
                PairwiseComparison(
                    group_a=a,
                    group_b=b,
                    mean_diff=mean_diff,
                    q=q,
                    p_adj=p_adj,
                    significant=p_adj < alpha,
                )
            )
    return out


def pooled_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided pooled-variance t-test. Returns (t, p)."""
    clean = _check_groups({"a": a, "b": b}, min_size=2)
    va, vb = clean["a"], clean["b"]
    na, nb = len(va), len(vb)
    ma, mb = sum(va) / na, sum(vb) / nb
    ssa = sum((v - ma) ** 2 for v in va)
    ssb = sum((v - mb) ** 2 for v in vb)
    df = na + nb - 2
    pooled = (ssa + ssb) / df
    if pooled <= 0.0:
        raise StatsError("zero pooled variance; t undefined")
    t = (ma - mb) / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    return t, t_sf_two_sided(t, df)


def _paired(x: Sequence[float], y: Sequence[float], min_n: int) -> tuple[list[float], list[float]]:
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys):
        raise StatsError("x and y must have equal length")
    if len(xs) < min_n:
        raise StatsError(f"need at least {min_n} paired observations")
    if any(not math.isfinite(v) for v in xs + ys):
        raise StatsError("non-finite values in input")
    return xs, ys


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Pearson correlation with a two-sided t-based p-value."""
    xs, ys = _paired(x, y, min_n=3)
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((v - mx) ** 2 for v in xs)
    syy = sum((v - my) ** 2 for v in ys)
    if sxx <= 0.0 or syy <= 0.0:
        raise StatsError("zero variance in x or y; correlation undefined")
    sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = t_sf_two_sided(t, n - 2)
    return CorrelationResult(r=r, p_value=p, n=n)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> RegressionResult:
    """Ordinary least squares y = slope * x + intercept."""
    xs, ys = _paired(x, y, min_n=3)
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((v - mx) ** 2 for v in xs)
    if sxx <= 0.0:
        raise StatsError("zero variance in x; fit undefined")
    sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    syy = sum((v - my) ** 2 for v in ys)
    if syy <= 0.0:
        r_squared = 1.0
        p = 0.0
    else:
        r = sxy / math.sqrt(sxx * syy)
        r = max(-1.0, min(1.0, r))
        r_squared = r * r
        if abs(r) == 1.0:
            p = 0.0
        else:
            t = r * math.sqrt((n - 2) / (1.0 - r * r))
            p = t_sf_two_sided(t, n - 2)
    return RegressionResult(slope=slope, intercept=intercept, r_squared=r_squared, p_value=p, n=n)
