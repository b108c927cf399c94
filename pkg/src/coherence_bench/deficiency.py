"""Experiment-comparison diagnostics: what rank reductions throw away.

In the two-point Gaussian location problem the mean is sufficient and the
minimax testing risk is (1 - TV)/2, with TV the total variation distance
between the product laws. Within-sample ranks are ancillary in any location
family, so rank-measurable rules cannot beat the coin-flip risk 1/2; the gap
gives a concrete, strictly positive lower bound on the deficiency of the
rank-reduced experiment. For estimation over a bounded parameter interval the
same ancillarity pins the rank-only minimax risk at the squared radius, while
the sample mean achieves 1/n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np
from scipy import special

from .dist import SeedSpec, tv_gaussian_shift

__all__ = [
    "TestingProblem",
    "TestingRiskReport",
    "AncillarityReport",
    "MinimaxReport",
    "RankWitness",
    "rank_vector",
    "gaussian_testing_risks",
    "deficiency_lower_bound",
    "rank_ancillarity_check",
    "rank_minimax_location",
    "exp_family_rank_witness",
]


@dataclass(frozen=True)
class TestingProblem:
    """Symmetric two-point Gaussian location testing problem.

    Hypotheses ``theta = -a`` versus ``theta = +a`` from ``n`` unit-variance
    observations under 0-1 loss and equal priors.
    """

    a: float
    n: int

    def __post_init__(self) -> None:
        if self.a <= 0:
            raise ValueError(f"shift must be positive, got {self.a}")
        if self.n < 1:
            raise ValueError(f"sample size must be >= 1, got {self.n}")


def rank_vector(values: Sequence[float]) -> tuple[int, ...]:
    """Within-sample ranks (1-based), ties broken by position."""
    order = np.argsort(np.asarray(values, dtype=float), kind="stable")
    ranks = np.empty(len(order), dtype=int)
    ranks[order] = np.arange(1, len(order) + 1)
    return tuple(int(r) for r in ranks)


@dataclass(frozen=True)
class TestingRiskReport:
    closed_form_full_risk: float
    full_risk: float
    full_risk_se: float
    rank_risk: float
    rank_risk_se: float


def gaussian_testing_risks(
    a: float, n: int, reps: int, seed: SeedSpec
) -> TestingRiskReport:
    """Monte Carlo testing risks with the closed-form benchmark.

    The full-data rule is the likelihood-ratio test (sign of the sample mean),
    with risk ``(1 - TV)/2 = 1 - Phi(a * sqrt(n))``. The rank-based rule is a
    fixed measurable function of the rank vector; since ranks are ancillary
    its risk is 1/2 regardless of the function, and the constant rule is used
    when n = 1 (a single rank carries nothing).
    """
    problem = TestingProblem(a, n)
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    rng = seed.rng()
    theta = np.where(rng.random(reps) < 0.5, -problem.a, problem.a)
    y = theta[:, None] + rng.standard_normal((reps, n))

    decide_full = np.where(y.mean(axis=1) > 0.0, problem.a, -problem.a)
    full_err = decide_full != theta
    full_risk = float(full_err.mean())

    if n == 1:
        decide_rank = np.full(reps, problem.a)
    else:
        # rule measurable w.r.t. the rank vector: where does the first draw rank?
        first_rank = 1 + (y < y[:, [0]]).sum(axis=1)
        decide_rank = np.where(first_rank > n / 2.0, problem.a, -problem.a)
    rank_err = decide_rank != theta
    rank_risk = float(rank_err.mean())

    closed = (1.0 - tv_gaussian_shift(problem.a, problem.n)) / 2.0
    return TestingRiskReport(
        closed_form_full_risk=closed,
        full_risk=full_risk,
        full_risk_se=math.sqrt(full_risk * (1.0 - full_risk) / reps),
        rank_risk=rank_risk,
        rank_risk_se=math.sqrt(rank_risk * (1.0 - rank_risk) / reps),
    )


def deficiency_lower_bound(a: float, n: int) -> float:
    """Lower bound TV/2 on the deficiency of the rank-reduced experiment."""
    return 0.5 * tv_gaussian_shift(a, n)


@dataclass(frozen=True)
class AncillarityReport:
    statistic: float
    dof: int
    p_value: float
    n_patterns: int


def rank_ancillarity_check(
    theta_list: Sequence[float],
    n: int,
    reps: int,
    seed: SeedSpec,
    scale_family: bool = False,
) -> AncillarityReport:
    """Homogeneity test of rank-pattern frequencies across locations.

    Samples ``Y_i = theta + N(0,1)`` (or ``Y_i = exp(theta) * N(0,1)`` with
    ``scale_family=True``), tabulates the n! rank patterns per theta, and runs
    a pooled Pearson homogeneity test. Location shifts preserve ranks, so the
    pattern law does not depend on theta; exchangeability alone already makes
    every pattern equally likely.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if n > 6:
        raise ValueError("pattern enumeration capped at n = 6")
    n_pat = math.factorial(n)
    if n == 1:
        return AncillarityReport(0.0, 0, 1.0, 1)
    if reps * 1.0 / n_pat < 5.0:
        raise ValueError(f"need reps >= {5 * n_pat} for expected counts >= 5")
    pattern_index = {p: i for i, p in enumerate(permutations(range(1, n + 1)))}
    rng = seed.rng()
    table = np.zeros((len(theta_list), n_pat))
    for row, theta in enumerate(theta_list):
        z = rng.standard_normal((reps, n))
        y = math.exp(theta) * z if scale_family else theta + z
        order = np.argsort(y, axis=1, kind="stable")
        ranks = np.empty_like(order)
        rows = np.arange(reps)[:, None]
        ranks[rows, order] = np.arange(1, n + 1)[None, :]
        for r in ranks:
            table[row, pattern_index[tuple(r)]] += 1

    col_tot = table.sum(axis=0)
    row_tot = table.sum(axis=1)
    total = table.sum()
    expected = np.outer(row_tot, col_tot) / total
    if np.any(expected < 5.0):
        raise ValueError("expected count below 5; increase reps")
    stat = float(((table - expected) ** 2 / expected).sum())
    dof = (table.shape[0] - 1) * (table.shape[1] - 1)
    p = float(special.gammaincc(dof / 2.0, stat / 2.0))
    return AncillarityReport(stat, dof, p, n_pat)


@dataclass(frozen=True)
class MinimaxReport:
    rank_only_lower_bound: float
    full_data_risk: float
    mc_mean_risk: float
    mc_mean_risk_se: float
    constant_rule_worst_risk: float


def rank_minimax_location(
    M: float, n: int, reps: int = 10**5, seed: SeedSpec = SeedSpec(0)
) -> MinimaxReport:
    """Bounded-location estimation: rank-only bound M^2 versus mean risk 1/n.

    A rank-measurable estimator has a theta-free law, so its worst squared
    error over ``theta in [-M, M]`` is at least ``M^2``; the sample mean
    achieves ``1/n`` everywhere, verified here by Monte Carlo at the worst
    corner ``theta = M``. The best constant rule (c = 0) attains exactly
    ``M^2``.
    """
    if M <= 0:
        raise ValueError(f"parameter radius must be positive, got {M}")
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = seed.rng()
    theta = M
    ybar = theta + rng.standard_normal((reps, n)).mean(axis=1)
    sq = (ybar - theta) ** 2
    mc_risk = float(sq.mean())
    mc_se = float(sq.std(ddof=1) / math.sqrt(reps))
    constant_worst = max((0.0 - th) ** 2 for th in (-M, M))
    return MinimaxReport(
        rank_only_lower_bound=M * M,
        full_data_risk=1.0 / n,
        mc_mean_risk=mc_risk,
        mc_mean_risk_se=mc_se,
        constant_rule_worst_risk=constant_worst,
    )


@dataclass(frozen=True)
class RankWitness:
    """Two samples with equal ranks but different sufficient statistics."""

    sample_1: tuple[float, ...]
    sample_2: tuple[float, ...]

    @property
    def ranks_equal(self) -> bool:
        return rank_vector(self.sample_1) == rank_vector(self.sample_2)

    @property
    def sums(self) -> tuple[float, float]:
        return (sum(self.sample_1), sum(self.sample_2))

    def exponential_log_lr(self, lam1: float, lam2: float) -> tuple[float, float]:
        """Log likelihood ratio lam1 vs lam2 under i.i.d. exponentials."""
        if lam1 <= 0 or lam2 <= 0:
            raise ValueError("rates must be positive")
        n = len(self.sample_1)
        s1, s2 = self.sums
        base = n * (math.log(lam1) - math.log(lam2))
        return (base - (lam1 - lam2) * s1, base - (lam1 - lam2) * s2)


def exp_family_rank_witness() -> RankWitness:
    """Canonical witness that ranks are not sufficient for exponentials.

    (1, 2, 3) and (1, 2, 30) share the rank vector (1, 2, 3) but have sums
    6 and 33, hence different likelihood ratios at any two distinct rates.
    """
    return RankWitness((1.0, 2.0, 3.0), (1.0, 2.0, 30.0))
