"""Conformal machinery: scores, p-values, split/full/CQR sets, coverage audit.

Predictors are injected functions; nothing here fits a model. The empirical
quantile convention is the ``ceil((1-alpha)(m+1))``-th order statistic from
:func:`coherence_bench.dist.empirical_quantile`, and p-values use the
conservative "count greater-or-equal" tie rule unless an explicit auxiliary
uniform is supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dist import ConditionalModel, SeedSpec, UnivariateLaw, empirical_quantile

__all__ = [
    "AbsoluteResidual",
    "CqrScore",
    "Identity",
    "ScoreRule",
    "PredictionSet",
    "CalibrationRecord",
    "conformal_p_value",
    "split_conformal_interval",
    "full_conformal_set",
    "default_grid",
    "cqr_scores",
    "cqr_interval",
    "coverage_audit",
]


@dataclass(frozen=True)
class AbsoluteResidual:
    """Nonconformity score ``|y - f(x)|`` around a point predictor."""

    predictor: Callable[[np.ndarray], np.ndarray]

    def score(self, x, y):
        return np.abs(np.asarray(y, dtype=float) - np.asarray(self.predictor(np.asarray(x, dtype=float)), dtype=float))


@dataclass(frozen=True)
class CqrScore:
    """CQR score ``max(lo(x) - y, y - hi(x))``; negative strictly inside the band."""

    lower: Callable[[np.ndarray], np.ndarray]
    upper: Callable[[np.ndarray], np.ndarray]

    def score(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lo = np.asarray(self.lower(x), dtype=float)
        hi = np.asarray(self.upper(x), dtype=float)
        if np.any(lo > hi):
            raise ValueError("crossing quantile predictors: lower > upper at some x")
        return np.maximum(lo - y, y - hi)


@dataclass(frozen=True)
class Identity:
    """Covariate-free score ``s(y) = y``."""

    def score(self, x, y):
        return np.asarray(y, dtype=float)


ScoreRule = AbsoluteResidual | CqrScore | Identity


@dataclass(frozen=True)
class PredictionSet:
    """Finite union of disjoint closed intervals at a nominal level."""

    intervals: tuple[tuple[float, float], ...]
    level: float

    def __post_init__(self) -> None:
        prev_hi = -math.inf
        for lo, hi in self.intervals:
            if lo > hi:
                raise ValueError(f"interval has lo > hi: ({lo}, {hi})")
            if lo < prev_hi:
                raise ValueError("intervals must be disjoint and sorted")
            prev_hi = hi

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    def contains(self, y: float) -> bool:
        return any(lo <= y <= hi for lo, hi in self.intervals)

    def total_length(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)


@dataclass(frozen=True)
class CalibrationRecord:
    """Calibration scores plus the level and tie-breaking convention."""

    scores: tuple[float, ...]
    alpha: float
    tie_rule: str = "deterministic-geq"

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not all(math.isfinite(s) for s in self.scores):
            raise ValueError("calibration scores must be finite")
        if self.tie_rule not in ("deterministic-geq", "randomized"):
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")


def conformal_p_value(cal, s_test: float, u: float | None = None) -> float:
    """Rank-based p-value of a test score against calibration scores.

    With the deterministic tie rule this is ``(#{S_i >= s_test} + 1)/(n + 1)``,
    taking values in ``{1/(n+1), ..., 1}``. Passing an auxiliary uniform ``u``
    switches to randomized tie-breaking
    ``(#{S_i > s} + u * (#{S_i = s} + 1))/(n + 1)``.
    """
    scores = np.asarray(cal.scores if isinstance(cal, CalibrationRecord) else cal, dtype=float)
    if scores.size == 0:
        raise ValueError("conformal p-value needs a nonempty calibration set")
    n = scores.size
    if u is None:
        return (int(np.count_nonzero(scores >= s_test)) + 1) / (n + 1)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"auxiliary uniform must lie in [0, 1], got {u}")
    greater = int(np.count_nonzero(scores > s_test))
    ties = int(np.count_nonzero(scores == s_test))
    return (greater + u * (ties + 1)) / (n + 1)


def split_conformal_interval(
    predictor: Callable[[np.ndarray], np.ndarray],
    residuals: Sequence[float],
    alpha: float,
    x: float,
) -> PredictionSet:
    """Split-conformal interval ``[f(x) - q, f(x) + q]``.

    ``q`` is the conformal empirical ``(1-alpha)`` quantile of the calibration
    residuals (all nonnegative).
    """
    res = np.asarray(residuals, dtype=float)
    if np.any(res < 0.0):
        raise ValueError("absolute residuals must be nonnegative")
    q = empirical_quantile(res, 1.0 - alpha)
    center = float(np.asarray(predictor(np.asarray(x, dtype=float))))
    return PredictionSet(((center - q, center + q),), level=1.0 - alpha)


def default_grid(y_values, size: int = 2001) -> np.ndarray:
    """Candidate grid spanning the data range plus four sample deviations."""
    y = np.asarray(y_values, dtype=float)
    pad = 4.0 * (float(np.std(y)) if y.size > 1 else 1.0)
    if pad == 0.0:
        pad = 1.0
    return np.linspace(float(y.min()) - pad, float(y.max()) + pad, size)


def full_conformal_set(
    data: Sequence[tuple[float, float]],
    score: ScoreRule,
    alpha: float,
    x: float,
    grid=None,
) -> PredictionSet:
    """Grid-based full conformal set ``{y : p(y) > alpha}``.

    For each candidate ``y`` the score rule is evaluated on the augmented
    dataset (the n data scores plus the test score at ``(x, y)``) and the
    candidate is kept when its p-value exceeds ``alpha``. Runs of adjacent
    accepted grid points merge into closed intervals extended half a grid
    step on each side.
    """
    pairs = [(None, float(p)) if np.isscalar(p) else (p[0], float(p[1])) for p in data]
    xs = np.asarray([0.0 if px is None else float(px) for px, _ in pairs])
    ys = np.asarray([py for _, py in pairs])
    if len(pairs) == 0:
        raise ValueError("full conformal needs at least one data point")
    grid = default_grid(ys) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("candidate grid must be nonempty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("candidate grid must be sorted")

    data_scores = np.asarray(score.score(xs, ys), dtype=float)
    n = data_scores.size
    test_scores = np.asarray(score.score(np.full(grid.shape, x), grid), dtype=float)
    # p(y) = (#{S_i >= s_test(y)} + 1) / (n + 1), vectorized over the grid
    counts = (data_scores[None, :] >= test_scores[:, None]).sum(axis=1)
    accepted = (counts + 1) / (n + 1) > alpha

    intervals: list[tuple[float, float]] = []
    if grid.size == 1:
        if accepted[0]:
            intervals.append((float(grid[0]), float(grid[0])))
    else:
        steps = np.diff(grid)
        idx = np.flatnonzero(accepted)
        if idx.size:
            breaks = np.flatnonzero(np.diff(idx) > 1)
            starts = np.concatenate(([idx[0]], idx[breaks + 1]))
            ends = np.concatenate((idx[breaks], [idx[-1]]))
            for i, j in zip(starts, ends):
                lo = grid[i] - 0.5 * steps[max(i - 1, 0)]
                hi = grid[j] + 0.5 * steps[min(j, steps.size - 1)]
                intervals.append((float(lo), float(hi)))
    return PredictionSet(tuple(intervals), level=1.0 - alpha)


def cqr_scores(
    data: Sequence[tuple[float, float]],
    lower: Callable[[np.ndarray], np.ndarray],
    upper: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """CQR calibration scores for labeled pairs, one per pair."""
    xs = np.asarray([p[0] for p in data], dtype=float)
    ys = np.asarray([p[1] for p in data], dtype=float)
    return CqrScore(lower, upper).score(xs, ys)


def cqr_interval(
    lower: Callable[[np.ndarray], np.ndarray],
    upper: Callable[[np.ndarray], np.ndarray],
    cal_scores: Sequence[float],
    alpha: float,
    x: float,
) -> PredictionSet:
    """CQR interval: the quantile band widened by the calibration quantile."""
    q = empirical_quantile(np.asarray(cal_scores, dtype=float), 1.0 - alpha)
    lo = float(np.asarray(lower(np.asarray(x, dtype=float)))) - q
    hi = float(np.asarray(upper(np.asarray(x, dtype=float)))) + q
    return PredictionSet(((lo, hi),), level=1.0 - alpha)


def _conformal_rank_index(alpha: float, m: int) -> int:
    return min(int(math.ceil((1.0 - alpha) * (m + 1))), m)


def coverage_audit(
    model: ConditionalModel,
    design: UnivariateLaw,
    method: str,
    alpha: float,
    n_cal: int,
    reps: int,
    seed: SeedSpec,
    predictor: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[float, float]:
    """Monte Carlo marginal coverage of a conformal method.

    Each replicate draws a fresh calibration set of size ``n_cal`` and a fresh
    test point from the same (design, model) pair, builds the prediction set,
    and checks whether the test response lands inside. Returns the coverage
    estimate and its binomial standard error. Membership reduces to rank
    comparisons, so no candidate grid is needed:

    - ``split``: absolute residual of the test point <= calibration quantile,
    - ``full``: conformal p-value of the test point > alpha,
    - ``cqr``: CQR score of the test point <= calibration quantile, with the
      band at levels ``alpha/2`` and ``1 - alpha/2`` taken from the model.
    """
    if method not in ("split", "full", "cqr"):
        raise ValueError(f"unknown conformal method {method!r}")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    rng = seed.rng()
    x = design.draw(rng, reps * (n_cal + 1)).reshape(reps, n_cal + 1)
    y = model.draw_y(rng, x)

    if method in ("split", "full"):
        fhat = predictor if predictor is not None else model.mean_fn
        scores = np.abs(y - np.asarray(fhat(x), dtype=float))
    else:
        lo = model.y_quantile(alpha / 2.0, x)
        hi = model.y_quantile(1.0 - alpha / 2.0, x)
        scores = np.maximum(lo - y, y - hi)

    cal, s_test = scores[:, :-1], scores[:, -1]
    if method == "full":
        counts = (cal >= s_test[:, None]).sum(axis=1)
        covered = (counts + 1) / (n_cal + 1) > alpha
    else:
        k = _conformal_rank_index(alpha, n_cal)
        qhat = np.sort(cal, axis=1)[:, k - 1]
        covered = s_test <= qhat
    p = float(np.mean(covered))
    return p, math.sqrt(p * (1.0 - p) / reps)
