"""Inference routines against pre-recorded reference values plus their algebraic laws.

The reference values in tests/fixtures/stats_oracle.json were produced once by
tests/oracles/make_stats_oracle.py with an independent implementation and are
frozen; nothing here recomputes them.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from phenoflow.errors import StatsError
from phenoflow.stats import (
    linear_fit,
    one_way_anova,
    pearson,
    pooled_t_test,
    studentized_range_cdf,
    tukey_kramer,
)

ORACLE = json.loads((Path(__file__).parent / "fixtures" / "stats_oracle.json").read_text())


def grouped(groups):
    return {f"g{i}": vals for i, vals in enumerate(groups)}


def close(a, b, tol=1e-6):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol * 1e-3)


def test_anova_three_groups_matches_reference():
    ref = ORACLE["anova3"]
    res = one_way_anova(grouped(ref["groups"]))
    assert close(res.f_stat, ref["F"])
    assert close(res.p_value, ref["p"])


def test_anova_five_groups_matches_reference():
    ref = ORACLE["anova5"]
    res = one_way_anova(grouped(ref["groups"]))
    assert close(res.f_stat, ref["F"])
    assert close(res.p_value, ref["p"])


def test_tukey_matches_reference_on_unequal_groups():
    ref = ORACLE["anova5"]
    comparisons = {
        (c.group_a, c.group_b): c for c in tukey_kramer(grouped(ref["groups"]))
    }
    assert len(comparisons) == 10
    for pair in ref["tukey"]:
        c = comparisons[(f"g{pair['a']}", f"g{pair['b']}")]
        assert abs(c.p_adj - pair["p"]) < 1e-4
        assert close(c.mean_diff, pair["diff"], tol=1e-9)
        assert c.significant == (c.p_adj < 0.05)


def test_two_group_equivalences_match_reference():
    ref = ORACLE["two_groups"]
    a, b = ref["groups"]
    t, t_p = pooled_t_test(a, b)
    assert close(t, ref["t"])
    assert close(t_p, ref["t_p"])
    res = one_way_anova({"a": a, "b": b})
    assert close(res.f_stat, ref["F"])
    assert close(res.p_value, ref["F_p"])
    assert abs(res.f_stat - t * t) < 1e-9
    (comparison,) = tukey_kramer({"a": a, "b": b})
    assert abs(comparison.p_adj - ref["tukey_p"]) < 1e-4


def test_studentized_range_cdf_spot_values():
    for spot in ORACLE["srange"]:
        got = studentized_range_cdf(spot["q"], spot["k"], spot["df"])
        assert abs(got - spot["cdf"]) < 1e-6, spot


@pytest.mark.parametrize("name", ["pearson32", "pearson6"])
def test_pearson_matches_reference(name):
    ref = ORACLE[name]
    res = pearson(ref["x"], ref["y"])
    assert close(res.r, ref["r"])
    assert close(res.p_value, ref["p"])


def test_linear_fit_matches_reference():
    ref = ORACLE["pearson32"]
    fit = linear_fit(ref["x"], ref["y"])
    assert close(fit.slope, ref["slope"])
    assert close(fit.intercept, ref["intercept"])
    assert close(fit.r_squared, ref["r2"])


# ------------------------------------------------------------- properties ----

values = st.floats(-50, 50, allow_nan=False, width=32).map(lambda v: round(v, 3))
group_lists = st.lists(
    st.lists(values, min_size=3, max_size=8), min_size=2, max_size=4
)


def has_spread(groups):
    return any(len(set(vals)) > 1 for vals in groups)


@settings(max_examples=50, deadline=None)
@given(groups=group_lists, seed=st.integers(0, 2**16))
def test_anova_permutation_invariance(groups, seed):
    assume(has_spread(groups))
    base = one_way_anova(grouped(groups))
    import random

    rng = random.Random(seed)
    shuffled = [list(vals) for vals in groups]
    for vals in shuffled:
        rng.shuffle(vals)
    rng.shuffle(shuffled)
    relabeled = {f"other{i}": vals for i, vals in enumerate(shuffled)}
    again = one_way_anova(relabeled)
    assert math.isclose(base.f_stat, again.f_stat, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(base.p_value, again.p_value, rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=50, deadline=None)
@given(groups=group_lists, shift=values, scale=st.floats(0.1, 20, allow_nan=False))
def test_anova_affine_invariance(groups, shift, scale):
    assume(has_spread(groups))
    base = one_way_anova(grouped(groups))
    moved = grouped([[scale * v + shift for v in vals] for vals in groups])
    again = one_way_anova(moved)
    assert math.isclose(base.f_stat, again.f_stat, rel_tol=1e-9, abs_tol=1e-9)
    assert 0.0 <= again.p_value <= 1.0


@settings(max_examples=50, deadline=None)
@given(
    a=st.lists(values, min_size=3, max_size=10),
    b=st.lists(values, min_size=3, max_size=10),
)
def test_f_equals_t_squared(a, b):
    assume(len(set(a)) > 1 or len(set(b)) > 1)
    t, t_p = pooled_t_test(a, b)
    res = one_way_anova({"a": a, "b": b})
    assert math.isclose(res.f_stat, t * t, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(res.p_value, t_p, rel_tol=1e-7, abs_tol=1e-9)


@settings(max_examples=40, deadline=None)
@given(groups=group_lists, alpha=st.sampled_from([0.01, 0.05, 0.2]))
def test_tukey_significance_is_threshold_on_p(groups, alpha):
    assume(has_spread(groups))
    for c in tukey_kramer(grouped(groups), alpha=alpha):
        assert 0.0 <= c.p_adj <= 1.0
        assert c.significant == (c.p_adj < alpha)


@settings(max_examples=40, deadline=None)
@given(
    xs=st.lists(values, min_size=4, max_size=12, unique=True),
    a=st.floats(0.2, 5, allow_nan=False),
    b=values,
)
def test_pearson_affine_equivariance(xs, a, b):
    ys = [0.8 * v + 1.5 for v in xs]
    noisy = [y + ((i % 3) - 1) * 0.25 for i, y in enumerate(ys)]
    assume(len(set(noisy)) > 1)
    base = pearson(xs, noisy)
    stretched = pearson([a * v + b for v in xs], noisy)
    flipped = pearson([-a * v + b for v in xs], noisy)
    assert math.isclose(base.r, stretched.r, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(base.r, -flipped.r, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(base.p_value, flipped.p_value, rel_tol=1e-9, abs_tol=1e-12)
    assert -1.0 <= base.r <= 1.0
    assert 0.0 <= base.p_value <= 1.0


def test_perfect_line_has_unit_r_squared():
    xs = [1.0, 2.0, 3.0, 4.0]
    fit = linear_fit(xs, [3.0 * v - 1.0 for v in xs])
    assert fit.r_squared == 1.0
    assert fit.p_value == 0.0
    assert fit.slope == pytest.approx(3.0)
    res = pearson(xs, [3.0 * v - 1.0 for v in xs])
    assert res.r == 1.0 and res.p_value == 0.0


@pytest.mark.parametrize(
    "call",
    [
        lambda: one_way_anova({"only": [1.0, 2.0]}),
        lambda: one_way_anova({"a": [1.0], "b": [1.0, 2.0]}),
        lambda: one_way_anova({"a": [1.0, float("nan")], "b": [1.0, 2.0]}),
        lambda: one_way_anova({"a": [1.0, 1.0], "b": [2.0, 2.0]}),
        lambda: tukey_kramer({"a": [1.0, 2.0], "b": [2.0, 3.0]}, alpha=0.0),
        lambda: tukey_kramer({"a": [1.0, 2.0], "b": [2.0, 3.0]}, alpha=1.0),
        lambda: pooled_t_test([5.0, 5.0], [5.0, 5.0]),
        lambda: pearson([1.0, 2.0], [1.0, 2.0]),
        lambda: pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]),
        lambda: pearson([1.0, 2.0, 3.0], [1.0, 2.0]),
        lambda: linear_fit([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]),
    ],
)
def test_degenerate_inputs_raise(call):
    with pytest.raises(StatsError):
        call()
