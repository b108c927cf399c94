import math

import numpy as np
import pytest

from coherence_bench.conformal import (
    AbsoluteResidual,
    CalibrationRecord,
    CqrScore,
    Identity,
    PredictionSet,
    conformal_p_value,
    coverage_audit,
    cqr_interval,
    cqr_scores,
    full_conformal_set,
    split_conformal_interval,
)
from coherence_bench.diagnostics import chi_square_gof
from coherence_bench.dist import ConditionalModel, PointMass, SeedSpec, Uniform

ZERO = lambda x: np.zeros_like(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# p-values
# ---------------------------------------------------------------------------

def test_p_value_counts():
    cal = CalibrationRecord((1.0, 2.0, 3.0, 4.0), alpha=0.1)
    assert conformal_p_value(cal, 2.5) == pytest.approx(0.6)   # {3, 4} + itself
    assert conformal_p_value(cal, 100.0) == pytest.approx(0.2)
    assert conformal_p_value(cal, 0.0) == pytest.approx(1.0)


def test_p_value_accepts_raw_scores():
    assert conformal_p_value([1.0, 2.0, 3.0, 4.0], 2.5) == pytest.approx(0.6)


def test_p_value_empty_calibration():
    with pytest.raises(ValueError):
        conformal_p_value([], 1.0)


def test_p_value_monotone_in_test_score():
    rng = SeedSpec(0).rng()
    scores = rng.standard_normal(25)
    grid = np.linspace(-3, 3, 50)
    ps = [conformal_p_value(scores, s) for s in grid]
    assert all(b <= a + 1e-15 for a, b in zip(ps, ps[1:]))


def test_p_value_randomized_tie_rule():
    scores = [1.0, 2.0, 2.0, 3.0]
    # deterministic rule counts ties as >=
    assert conformal_p_value(scores, 2.0) == pytest.approx(4.0 / 5.0)
    # u = 1 recovers the deterministic count, u = 0 only strict exceedances
    assert conformal_p_value(scores, 2.0, u=1.0) == pytest.approx(4.0 / 5.0)
    assert conformal_p_value(scores, 2.0, u=0.0) == pytest.approx(1.0 / 5.0)
    with pytest.raises(ValueError):
        conformal_p_value(scores, 2.0, u=1.5)


def test_p_value_uniform_on_exchangeable_data():
    # law of p at the true test point is uniform on {1/(n+1), ..., 1}
    n, reps = 9, 10_000
    rng = SeedSpec(21).rng()
    y = rng.standard_normal((reps, n + 1))
    counts_ge = (y[:, :-1] >= y[:, [-1]]).sum(axis=1)
    levels = counts_ge  # p = (counts+1)/(n+1) -> index by counts
    observed = np.bincount(levels, minlength=n + 1)
    stat, p = chi_square_gof(observed, np.full(n + 1, 1.0 / (n + 1)))
    assert p > 0.001


# ---------------------------------------------------------------------------
# prediction sets
# ---------------------------------------------------------------------------

def test_prediction_set_validation_and_membership():
    ps = PredictionSet(((0.0, 1.0), (2.0, 3.0)), level=0.9)
    assert ps.contains(0.5) and ps.contains(2.0) and not ps.contains(1.5)
    assert ps.total_length() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        PredictionSet(((1.0, 0.0),), level=0.9)
    with pytest.raises(ValueError):
        PredictionSet(((0.0, 2.0), (1.0, 3.0)), level=0.9)


def test_split_interval_order_statistic():
    residuals = list(range(1, 100))  # 1..99
    ps = split_conformal_interval(ZERO, residuals, 0.1, 0.0)
    assert ps.intervals == ((-90.0, 90.0),)


def test_split_interval_singleton_and_constant():
    f = lambda x: np.asarray(x, dtype=float)
    ps = split_conformal_interval(f, [2.0], 0.5, 5.0)
    assert ps.intervals == ((3.0, 7.0),)
    ps2 = split_conformal_interval(ZERO, [0.7] * 10, 0.37, 0.0)
    assert ps2.intervals == ((-0.7, 0.7),)


def test_split_interval_rejects_negative_residuals():
    with pytest.raises(ValueError):
        split_conformal_interval(ZERO, [-1.0, 2.0], 0.1, 0.0)


# ---------------------------------------------------------------------------
# full conformal on a grid
# ---------------------------------------------------------------------------

def full_conformal_oracle(data_y, grid, alpha):
    """Accepted mask via the order-statistic cell formula."""
    data_y = np.asarray(data_y, dtype=float)
    n = data_y.size
    out = []
    for y in grid:
        k = int(np.sum(data_y < y))
        out.append((n - k + 1) / (n + 1) > alpha)
    return np.asarray(out)


def test_full_conformal_matches_cell_formula():
    data = [1.0, 2.0, 3.0, 4.0]
    grid = np.linspace(-10.0, 10.0, 401)
    for alpha in (0.19, 0.35, 0.5, 0.7, 0.9):
        ps = full_conformal_set([(0.0, y) for y in data], Identity(), alpha, 0.0, grid)
        want = full_conformal_oracle(data, grid, alpha)
        got = np.asarray([ps.contains(g) for g in grid])
        assert np.array_equal(got, want)


def test_full_conformal_region_shapes():
    data = [(0.0, y) for y in (1.0, 2.0, 3.0, 4.0)]
    grid = np.linspace(-10.0, 10.0, 2001)
    # p per cell: 1, .8, .6, .4, .2 -- everything accepted at alpha = 0.19
    all_in = full_conformal_set(data, Identity(), 0.19, 0.0, grid)
    assert all_in.contains(-9.9) and all_in.contains(9.9)
    # at alpha = 0.9 only the region below the smallest point survives
    low = full_conformal_set(data, Identity(), 0.9, 0.0, grid)
    assert low.contains(-5.0) and not low.contains(1.5) and not low.contains(9.0)
    # at alpha = 0.99 nothing survives
    empty = full_conformal_set(data, Identity(), 0.99, 0.0, grid)
    assert empty.is_empty


def test_full_conformal_single_point_grid():
    data = [(0.0, y) for y in (1.0, 2.0, 3.0, 4.0)]
    ps = full_conformal_set(data, Identity(), 0.5, 0.0, np.array([100.0]))
    assert ps.is_empty  # p(100) = 0.2 <= 0.5
    ps2 = full_conformal_set(data, Identity(), 0.1, 0.0, np.array([100.0]))
    assert ps2.intervals == ((100.0, 100.0),)


def test_full_conformal_validation():
    with pytest.raises(ValueError):
        full_conformal_set([(0.0, 1.0)], Identity(), 0.1, 0.0, np.array([]))


def test_full_conformal_nesting():
    rng = SeedSpec(3).rng()
    data = [(float(x), float(y)) for x, y in rng.standard_normal((12, 2))]
    grid = np.linspace(-6, 6, 501)
    score = AbsoluteResidual(ZERO)
    inner = full_conformal_set(data, score, 0.2, 0.0, grid)   # alpha2
    outer = full_conformal_set(data, score, 0.05, 0.0, grid)  # alpha1 < alpha2
    for g in grid:
        if inner.contains(g):
            assert outer.contains(g)


# ---------------------------------------------------------------------------
# CQR
# ---------------------------------------------------------------------------

def band(lo_c, hi_c):
    return (
        lambda x: np.full_like(np.asarray(x, dtype=float), lo_c),
        lambda x: np.full_like(np.asarray(x, dtype=float), hi_c),
    )


def test_cqr_scores_sign_cases():
    lo, hi = band(-1.0, 1.0)
    assert cqr_scores([(0.0, -1.0)], lo, hi)[0] == pytest.approx(0.0)  # boundary
    s_in = cqr_scores([(0.0, 0.25)], lo, hi)[0]
    assert s_in == pytest.approx(-0.75)  # negative: distance to nearest edge
    assert cqr_scores([(0.0, 3.0)], lo, hi)[0] == pytest.approx(2.0)


def test_cqr_scores_crossing_predictors_raise():
    lo, hi = band(1.0, -1.0)
    with pytest.raises(ValueError):
        cqr_scores([(0.0, 0.0)], lo, hi)


def test_cqr_interval_widening():
    lo, hi = band(-1.0, 1.0)
    ps = cqr_interval(lo, hi, [0.0, 0.0, 0.0], 0.5, 0.0)
    assert ps.intervals == ((-1.0, 1.0),)
    ps2 = cqr_interval(lo, hi, [0.5] * 9, 0.1, 0.0)
    assert ps2.intervals == ((-1.5, 1.5),)


def test_cqr_interval_shifting_band():
    lo = lambda x: np.asarray(x, dtype=float)
    hi = lambda x: np.asarray(x, dtype=float) + 1.0
    scores = [0.1, 0.2, 0.3, 0.4]
    # conformal quantile at 1 - alpha = 0.5 of 4 values: ceil(0.5*5) = 3rd
    ps = cqr_interval(lo, hi, scores, 0.5, 2.0)
    assert ps.intervals == ((2.0 - 0.3, 3.0 + 0.3),)


# ---------------------------------------------------------------------------
# coverage audit
# ---------------------------------------------------------------------------

HETERO = ConditionalModel(mean_fn=lambda x: x, scale_fn=lambda x: 1.0 + x)


def test_coverage_split_exact_rank_value():
    # exact coverage for continuous scores: ceil(0.9 * 100)/100 = 0.90
    cov, se = coverage_audit(HETERO, Uniform(0.0, 1.0), "split", 0.1, 99, 10_000, SeedSpec(40))
    assert abs(cov - 0.90) <= 3.0 * se


def test_coverage_two_point_small_sample():
    # n_cal = 1, alpha near 1: p-value is 1/2 or 1, so coverage ~ 1/2
    cov, se = coverage_audit(HETERO, Uniform(0.0, 1.0), "split", 0.999, 1, 4000, SeedSpec(41))
    assert abs(cov - 0.5) <= 4.0 * se


def test_coverage_degenerate_noise():
    model = ConditionalModel(
        mean_fn=lambda x: x, scale_fn=lambda x: np.ones_like(np.asarray(x, float)),
        noise=PointMass(0.0),
    )
    cov, _ = coverage_audit(model, Uniform(0.0, 1.0), "split", 0.1, 19, 500, SeedSpec(42))
    assert cov == 1.0


@pytest.mark.parametrize("method", ["split", "full", "cqr"])
@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.2])
def test_coverage_lower_bound_all_methods(method, alpha):
    cov, se = coverage_audit(HETERO, Uniform(0.0, 1.0), method, alpha, 49, 4000, SeedSpec(43))
    assert cov >= 1.0 - alpha - 3.0 * se


def test_coverage_deterministic_under_seed():
    a = coverage_audit(HETERO, Uniform(0.0, 1.0), "split", 0.1, 30, 200, SeedSpec(44))
    b = coverage_audit(HETERO, Uniform(0.0, 1.0), "split", 0.1, 30, 200, SeedSpec(44))
    assert a == b


def test_coverage_audit_validation():
    with pytest.raises(ValueError):
        coverage_audit(HETERO, Uniform(0.0, 1.0), "jackknife", 0.1, 10, 10, SeedSpec(0))
    with pytest.raises(ValueError):
        coverage_audit(HETERO, Uniform(0.0, 1.0), "split", 0.1, 10, 0, SeedSpec(0))
