import math

import numpy as np
import pytest
from scipy import integrate

from coherence_bench.dist import (
    Beta,
    ConditionalModel,
    Exponential,
    Normal,
    PointMass,
    SeedSpec,
    Uniform,
    empirical_quantile,
    mixture_residual_cdf,
    mixture_residual_quantile,
    tv_gaussian_shift,
)

LAWS = [
    Uniform(0.0, 1.0),
    Uniform(2.0, 4.0),
    Beta(2.0, 5.0),
    Beta(5.0, 1.0),
    Normal(0.0, 1.0),
    Normal(-1.0, 4.0),
    Exponential(1.0),
    Exponential(0.25),
]


# ---------------------------------------------------------------------------
# law parameter validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "ctor",
    [
        lambda: Uniform(1.0, 1.0),
        lambda: Uniform(2.0, 1.0),
        lambda: Beta(0.0, 1.0),
        lambda: Beta(1.0, -2.0),
        lambda: Normal(0.0, 0.0),
        lambda: Exponential(0.0),
    ],
)
def test_invalid_parameters_raise(ctor):
    with pytest.raises(ValueError):
        ctor()


# ---------------------------------------------------------------------------
# cdf / quantile round trips
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("law", LAWS)
def test_cdf_quantile_round_trip(law):
    ps = np.arange(0.01, 1.0, 0.01)
    qs = law.quantile(ps)
    assert np.all(np.abs(law.cdf(qs) - ps) <= 1e-8)


@pytest.mark.parametrize("law", LAWS)
def test_cdf_monotone_with_limits(law):
    grid = np.linspace(-50.0, 50.0, 401)
    vals = law.cdf(grid)
    assert np.all(np.diff(vals) >= -1e-15)
    assert np.all((vals >= 0.0) & (vals <= 1.0))
    assert law.cdf(-1e12) == pytest.approx(0.0, abs=1e-12)
    assert law.cdf(1e12) == pytest.approx(1.0, abs=1e-12)


def test_quantile_domain_error():
    with pytest.raises(ValueError):
        Normal(0.0, 1.0).quantile(0.0)
    with pytest.raises(ValueError):
        Uniform(0.0, 1.0).quantile(1.0)


def test_normal_cdf_symmetry():
    assert Normal(0.0, 1.0).cdf(0.0) == pytest.approx(0.5, abs=1e-15)


def test_uniform_identity_cdf():
    assert Uniform(0.0, 1.0).cdf(0.3) == pytest.approx(0.3, abs=1e-15)


def test_beta_cdf_against_quadrature_oracle():
    # adaptive quadrature of the Beta(2,5) density, independent of betainc
    dens = lambda x: 30.0 * x * (1.0 - x) ** 4
    oracle, err = integrate.quad(dens, 0.0, 0.5, epsabs=1e-13)
    assert err < 1e-12
    assert Beta(2.0, 5.0).cdf(0.5) == pytest.approx(oracle, abs=1e-10)
    assert oracle == pytest.approx(0.890625, abs=1e-10)


def test_normal_quantile_median():
    assert Normal(0.0, 1.0).quantile(0.5) == pytest.approx(0.0, abs=1e-12)


def test_uniform_quantile_linear():
    assert Uniform(2.0, 4.0).quantile(0.25) == pytest.approx(2.5, abs=1e-12)


def test_exponential_quantile_closed_form_and_bisection_oracle():
    law = Exponential(1.0)
    q = float(law.quantile(0.9))
    assert q == pytest.approx(math.log(10.0), abs=1e-10)
    lo, hi = 0.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if law.cdf(mid) < 0.9:
            lo = mid
        else:
            hi = mid
    assert q == pytest.approx(0.5 * (lo + hi), abs=1e-8)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_point_mass_sampling():
    assert np.array_equal(PointMass(2.0).sample(3, SeedSpec(0)), [2.0, 2.0, 2.0])


def test_sampling_bit_reproducible():
    for law in LAWS:
        a = law.sample(100, SeedSpec(123, 4))
        b = law.sample(100, SeedSpec(123, 4))
        assert np.array_equal(a, b)
        c = law.sample(100, SeedSpec(123, 5))
        assert not np.array_equal(a, c)


def test_sample_size_validation():
    with pytest.raises(ValueError):
        Uniform(0.0, 1.0).sample(-1, SeedSpec(0))
    assert Uniform(0.0, 1.0).sample(0, SeedSpec(0)).size == 0


def test_uniform_sample_mean_clt_bound():
    x = Uniform(0.0, 1.0).sample(10**5, SeedSpec(7))
    # 3 sigma with sigma = sqrt(1/12)/sqrt(n): 0.00274, round up per contract
    assert abs(x.mean() - 0.5) < 0.01


def test_normal_empirical_cdf_at_zero():
    x = Normal(0.0, 1.0).sample(10**5, SeedSpec(8))
    assert abs(np.mean(x <= 0.0) - 0.5) < 0.005


@pytest.mark.parametrize("law", LAWS)
def test_sample_matches_cdf_at_quartiles(law):
    # ratio-of-gammas Beta sampler (and the others) against the cdf
    x = law.sample(200_000, SeedSpec(9))
    for p in (0.25, 0.5, 0.75):
        q = float(law.quantile(p))
        assert abs(np.mean(x <= q) - p) < 3.5 * math.sqrt(p * (1 - p) / x.size)


# ---------------------------------------------------------------------------
# conditional model
# ---------------------------------------------------------------------------

def test_conditional_model_law_matches_mc():
    model = ConditionalModel(mean_fn=lambda x: x, scale_fn=lambda x: 1.0 + x)
    x = np.full(200_000, 0.5)
    y = model.sample_y(x, SeedSpec(10))
    # Law(Y | X = 0.5) = N(0.5, 1.5^2)
    p_hat = np.mean(y <= 0.5)
    assert abs(p_hat - 0.5) < 3.5 * math.sqrt(0.25 / y.size)
    assert model.y_cdf(0.5, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert model.y_quantile(0.5, np.asarray(0.5)) == pytest.approx(0.5, abs=1e-12)


def test_conditional_model_rejects_nonpositive_scale():
    model = ConditionalModel(mean_fn=lambda x: x, scale_fn=lambda x: x)
    with pytest.raises(ValueError):
        model.sample_y(np.array([0.0, 1.0]), SeedSpec(0))


# ---------------------------------------------------------------------------
# empirical quantile (conformal rank convention)
# ---------------------------------------------------------------------------

def test_empirical_quantile_rule():
    assert empirical_quantile([1, 2, 3, 4], 0.5) == 3.0  # ceil(0.5 * 5) = 3
    assert empirical_quantile([5], 0.25) == 5.0
    assert empirical_quantile([5], 0.99) == 5.0
    assert empirical_quantile(list(range(1, 100)), 0.9) == 90.0  # ceil(0.9 * 100)


def test_empirical_quantile_errors():
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 1.0)
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 0.5, kind="linear")


# ---------------------------------------------------------------------------
# residual mixture cdf / quantile
# ---------------------------------------------------------------------------

def scale_1px(x):
    return 1.0 + np.asarray(x, dtype=float)


def test_mixture_cdf_point_mass_design():
    # degenerate design: the mixture collapses to one half-normal
    from scipy.special import ndtr

    for r in (0.5, 1.0, 2.0):
        want = 2.0 * ndtr(r / 1.0) - 1.0
        got = mixture_residual_cdf(PointMass(0.0), scale_1px, r)
        assert got == pytest.approx(want, abs=1e-10)


def test_mixture_cdf_zero_and_negative_radius():
    assert mixture_residual_cdf(Uniform(0.0, 1.0), scale_1px, 0.0) == 0.0
    assert mixture_residual_cdf(Uniform(0.0, 1.0), scale_1px, -1.0) == 0.0


def test_mixture_cdf_against_mc_oracle():
    rng = SeedSpec(11).rng()
    n = 10**6
    x = rng.random(n)
    z = rng.standard_normal(n)
    p_hat = float(np.mean((1.0 + x) * np.abs(z) <= 2.0))
    se = math.sqrt(p_hat * (1.0 - p_hat) / n)
    got = mixture_residual_cdf(Uniform(0.0, 1.0), scale_1px, 2.0)
    assert abs(got - p_hat) < 3.0 * se


def test_mixture_cdf_monotone_in_radius():
    grid = np.linspace(0.0, 6.0, 25)
    vals = [mixture_residual_cdf(Beta(2.0, 5.0), scale_1px, r) for r in grid]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_mixture_quantile_half_normal():
    got = mixture_residual_quantile(PointMass(0.0), lambda x: np.ones_like(np.asarray(x, float)), 0.9)
    assert got == pytest.approx(1.6448536269514722, abs=1e-7)


def test_mixture_quantile_frozen_oracle_values():
    # frozen from an independent bisection over the quadrature cdf
    q1 = mixture_residual_quantile(Uniform(0.0, 1.0), scale_1px, 0.9)
    q2 = mixture_residual_quantile(Beta(2.0, 5.0), scale_1px, 0.9)
    assert q1 == pytest.approx(2.506349065921433, abs=1e-6)
    assert q2 == pytest.approx(2.1253802487008606, abs=1e-6)
    q0 = mixture_residual_quantile(PointMass(0.0), scale_1px, 0.9)
    assert q0 < q2 < q1  # stochastically larger designs widen the mixture


def test_mixture_quantile_round_trip():
    q = mixture_residual_quantile(Uniform(0.0, 1.0), scale_1px, 0.75)
    assert mixture_residual_cdf(Uniform(0.0, 1.0), scale_1px, q) == pytest.approx(0.75, abs=1e-7)


# ---------------------------------------------------------------------------
# total variation closed form
# ---------------------------------------------------------------------------

def tv_quadrature_oracle(a, n):
    mu = a * math.sqrt(n)
    f = lambda t: 0.5 * abs(
        math.exp(-0.5 * (t - mu) ** 2) - math.exp(-0.5 * (t + mu) ** 2)
    ) / math.sqrt(2.0 * math.pi)
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-10, limit=200)
    return val


@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("n", [1, 4, 16])
def test_tv_closed_form_matches_quadrature(a, n):
    assert abs(tv_gaussian_shift(a, n) - tv_quadrature_oracle(a, n)) <= 1e-6


def test_tv_values_and_invariance():
    assert tv_gaussian_shift(1e-9, 1) == pytest.approx(0.0, abs=1e-6)
    assert tv_gaussian_shift(1.0, 1) == pytest.approx(0.6826894921370859, abs=1e-12)
    assert tv_gaussian_shift(0.5, 4) == pytest.approx(tv_gaussian_shift(1.0, 1), abs=1e-12)


def test_tv_validation():
    with pytest.raises(ValueError):
        tv_gaussian_shift(0.0, 1)
    with pytest.raises(ValueError):
        tv_gaussian_shift(1.0, 0)
