"""Native statistical tests (ANOVA, Tukey-Kramer, correlation, regression)."""
from __future__ import annotations

from .inference import (
    AnovaResult,
    CorrelationResult,
    GroupedSample,
    PairwiseComparison,
    RegressionResult,
    linear_fit,
    one_way_anova,
    pearson,
    pooled_t_test,
    tukey_kramer,
)
from .special import (
    betainc_reg,
    f_sf,
    normal_cdf,
    studentized_range_cdf,
    studentized_range_sf,
    t_sf_two_sided,
)

__all__ = [
    "AnovaResult",
    "CorrelationResult",
    "GroupedSample",
    "PairwiseComparison",
    "RegressionResult",
    "linear_fit",
    "one_way_anova",
    "pearson",
    "pooled_t_test",
    "tukey_kramer",
    "betainc_reg",
    "f_sf",
    "normal_cdf",
    "studentized_range_cdf",
    "studentized_range_sf",
    "t_sf_two_sided",
]
