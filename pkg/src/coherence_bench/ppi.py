"""Prediction-powered inference diagnostics.

The rectified estimator corrects an abundant proxy with a small labeled
sample; it is unbiased, but its precision is capped by the proxy noise
(variance ``tau^2 + sigma^2/n`` against ``sigma^2/N`` for a fully labeled
run), and the proxy itself is a pipeline object whose population value and
residual scale depend on the upstream design. The Bayes Linear adjustment is
included as the coherent affine-update contrast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dist import SeedSpec, empirical_quantile

__all__ = [
    "ProxySlope",
    "LabeledSample",
    "BeliefStructure",
    "TwoPipelineReport",
    "SlopeSimReport",
    "ppi_mean_rectified",
    "ppi_slope_corrected",
    "ppi_variance",
    "full_variance",
    "information_compare",
    "ridge_population_slope",
    "residual_scale_expectation",
    "bayes_linear_adjust",
    "ppi_slope_simulation",
    "two_pipeline_experiment",
]


@dataclass(frozen=True)
class ProxySlope:
    """Upstream slope proxy ``beta_tilde = beta + U`` with ``U ~ N(0, tau^2)``."""

    beta_tilde: float
    tau: float = 0.0

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError(f"proxy noise s.d. must be >= 0, got {self.tau}")


@dataclass(frozen=True)
class LabeledSample:
    """Labeled pairs for the bias-correction step."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.x) != len(self.y) or len(self.x) == 0:
            raise ValueError("labeled sample needs matching nonempty x and y")
        if sum(v * v for v in self.x) <= 0.0:
            raise ValueError("slope correction needs sum(x^2) > 0")


@dataclass(frozen=True)
class BeliefStructure:
    """First- and second-order prior specification for the affine adjustment."""

    mean_y: float
    mean_x: float
    cov_yx: float
    var_x: float

    def __post_init__(self) -> None:
        if self.var_x <= 0:
            raise ValueError(f"Var(X) must be positive, got {self.var_x}")


def ppi_mean_rectified(
    proxy_unlabeled: Sequence[float],
    proxy_labeled: Sequence[float],
    y_labeled: Sequence[float],
) -> float:
    """Rectified mean: proxy mean plus the labeled-sample bias correction."""
    pu = np.asarray(proxy_unlabeled, dtype=float)
    pl = np.asarray(proxy_labeled, dtype=float)
    yl = np.asarray(y_labeled, dtype=float)
    if pu.size == 0 or pl.size == 0 or yl.size == 0:
        raise ValueError("all inputs must be nonempty")
    if pl.size != yl.size:
        raise ValueError("labeled proxies and labels must have equal length")
    return float(pu.mean() + yl.mean() - pl.mean())


def ppi_slope_corrected(proxy: ProxySlope, sample: LabeledSample) -> float:
    """One-step corrected slope: proxy plus the residual regression on x.

    Algebraically identical to ``beta`` when the labels are noiseless
    (the correction cancels any proxy error exactly), and conditionally
    unbiased in general.
    """
    x = np.asarray(sample.x, dtype=float)
    y = np.asarray(sample.y, dtype=float)
    sxx = float(x @ x)
    return proxy.beta_tilde + float(x @ (y - proxy.beta_tilde * x)) / sxx


def ppi_variance(tau: float, sigma: float, n: int) -> float:
    """Variance ``tau^2 + sigma^2/n`` of the proxy-corrected slope."""
    if tau < 0 or sigma <= 0 or n < 1:
        raise ValueError("need tau >= 0, sigma > 0, n >= 1")
    return tau * tau + sigma * sigma / n


def full_variance(sigma: float, N: int) -> float:
    """Variance ``sigma^2/N`` of the fully labeled benchmark."""
    if sigma <= 0 or N < 1:
        raise ValueError("need sigma > 0, N >= 1")
    return sigma * sigma / N


def information_compare(
    tau: float, sigma: float, n: int, N: int
) -> tuple[float, float, bool]:
    """Effective informations ``1/tau^2 + n/sigma^2`` vs ``N/sigma^2``.

    The boolean flags strict inferiority of the proxy route; with a perfect
    proxy (``tau = 0``) the proxy information is infinite and never inferior.
    """
    if sigma <= 0 or n < 1 or N < 1 or tau < 0:
        raise ValueError("need sigma > 0, n >= 1, N >= 1, tau >= 0")
    i_full = N / (sigma * sigma)
    i_ppi = math.inf if tau == 0.0 else 1.0 / (tau * tau) + n / (sigma * sigma)
    return i_ppi, i_full, i_ppi < i_full


def ridge_population_slope(ex2: float, lam: float, beta: float) -> float:
    """Population ridge slope ``ex2 / (ex2 + lam) * beta``.

    Depends on the upstream design through the second moment, so two designs
    with different ``E[X^2]`` induce different proxies for the same
    deployment conditional law.
    """
    if ex2 <= 0:
        raise ValueError(f"E[X^2] must be positive, got {ex2}")
    if lam < 0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    return ex2 / (ex2 + lam) * beta


def residual_scale_expectation(
    beta: float, beta_tilde: float, sigma: float, ex2_deploy: float
) -> float:
    """Mean squared proxy residual ``sigma^2 + (beta - beta_tilde)^2 E[X^2]``."""
    if sigma <= 0 or ex2_deploy <= 0:
        raise ValueError("need sigma > 0 and E[X^2] > 0")
    return sigma * sigma + (beta - beta_tilde) ** 2 * ex2_deploy


def bayes_linear_adjust(beliefs: BeliefStructure, x_obs: float) -> float:
    """Affine adjusted expectation given an observation of X."""
    return beliefs.mean_y + beliefs.cov_yx / beliefs.var_x * (x_obs - beliefs.mean_x)


@dataclass(frozen=True)
class SlopeSimReport:
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    target_variance: float


def ppi_slope_simulation(
    beta: float,
    tau: float,
    sigma: float,
    n: int,
    reps: int,
    seed: SeedSpec,
    chunk: int = 20_000,
) -> SlopeSimReport:
    """Monte Carlo law of the corrected slope under the Gaussian model.

    Standard-normal design, fresh proxy noise per replicate drawn
    independently of the labeled sample. The variance standard error is
    moment-based (via the fourth central moment).
    """
    if reps < 2:
        raise ValueError(f"reps must be >= 2, got {reps}")
    rng = seed.rng()
    estimates = np.empty(reps)
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        x = rng.standard_normal((b, n))
        eps = sigma * rng.standard_normal((b, n))
        u = tau * rng.standard_normal(b)
        beta_tilde = beta + u
        y = beta * x + eps
        sxx = (x * x).sum(axis=1)
        estimates[done : done + b] = beta_tilde + (
            (x * (y - beta_tilde[:, None] * x)).sum(axis=1) / sxx
        )
        done += b
    mean = float(estimates.mean())
    var = float(estimates.var(ddof=1))
    centered = estimates - mean
    m4 = float((centered**4).mean())
    var_se = math.sqrt(max(m4 - var * var, 0.0) / reps)
    return SlopeSimReport(
        mean=mean,
        mean_se=float(estimates.std(ddof=1) / math.sqrt(reps)),
        variance=var,
        variance_se=var_se,
        target_variance=ppi_variance(tau, sigma, n),
    )


@dataclass(frozen=True)
class TwoPipelineReport:
    """Residual laws of a well-specified and a misspecified proxy.

    Pipeline A uses the true regression function as proxy, pipeline B the
    zero proxy; the deployment conditional law is identical. ``var_diff`` is
    the paired estimate of ``Var(R_B) - Var(R_A)`` with its standard error,
    and the ``qhat`` fields are the induced split-conformal corrections at
    level 0.9.
    """

    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    var_diff: float
    var_diff_se: float
    qhat_a: float
    qhat_b: float


def two_pipeline_experiment(
    f: Callable[[np.ndarray], np.ndarray],
    sigma_noise: float,
    reps: int,
    seed: SeedSpec,
) -> TwoPipelineReport:
    """Same conditional law, two proxies, different residual laws.

    Draws ``reps`` pairs (X, eps) with X uniform on [0, 1] and
    ``Y = f(X) + sigma * eps``; residuals are ``R_A = eps * sigma`` for the
    true-function proxy and ``R_B = f(X) + sigma * eps`` for the zero proxy.
    The variance difference uses the paired per-draw influence values, so the
    common noise cancels from its standard error.
    """
    if reps < 2:
        raise ValueError(f"reps must be >= 2, got {reps}")
    if sigma_noise <= 0:
        raise ValueError(f"noise s.d. must be positive, got {sigma_noise}")
    rng = seed.rng()
    x = rng.random(reps)
    eps = sigma_noise * rng.standard_normal(reps)
    r_a = eps
    r_b = np.asarray(f(x), dtype=float) + eps
    d = (r_b - r_b.mean()) ** 2 - (r_a - r_a.mean()) ** 2
    alpha = 0.1
    return TwoPipelineReport(
        mean_a=float(r_a.mean()),
        mean_b=float(r_b.mean()),
        var_a=float(r_a.var(ddof=1)),
        var_b=float(r_b.var(ddof=1)),
        var_diff=float(d.mean()),
        var_diff_se=float(d.std(ddof=1) / math.sqrt(reps)),
        qhat_a=empirical_quantile(np.abs(r_a), 1.0 - alpha),
        qhat_b=empirical_quantile(np.abs(r_b), 1.0 - alpha),
    )
