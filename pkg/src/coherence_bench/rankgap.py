"""Rank-gap predictive kernels and the kernel-space metric.

The covariate-free rank construction partitions the line into the n+1
order-statistic gaps and assigns each gap probability 1/(n+1) (Hill's A_(n)
stipulation, equivalently: the rank of the next observation is uniform given
the past). A *bridge* promotes that set-function to a full predictive law by
completing the interior of each gap (uniform) and the two unbounded gaps
(exponential tails). A conjugate Gaussian posterior predictive is provided as
the countably additive benchmark, and a metric on one-step kernels compares
the two families through a fixed table of bounded-Lipschitz test functions.

Cell masses are carried as exact rationals so that set-function identities
(mass conservation, belief/plausibility duality) hold exactly, not merely to
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from scipy import special

from .dist import SeedSpec

__all__ = [
    "IntervalUnion",
    "OrderCells",
    "RankGapMass",
    "WithinCellCompletion",
    "BridgedKernel",
    "GaussianPredictive",
    "ConjugateGaussian",
    "KernelMetricConfig",
    "order_cells",
    "insert_and_recurse",
    "hill_mass",
    "next_rank_distribution",
    "default_completion",
    "bridge_kernel",
    "bayes_predictive",
    "hill_bridge_family",
    "conjugate_family",
    "kernel_distance",
    "belief_plausibility",
    "rank_invariance_check",
]

_GL_NODES = 32
_LAGUERRE_NODES = 32
_HERMITE_NODES = 64


# ---------------------------------------------------------------------------
# events: finite unions of half-open intervals (lo, hi]
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of half-open intervals ``(lo, hi]``.

    This is the natural event algebra for rank-gap cells: it contains every
    cell, is closed under finite union, intersection and complement, and
    probabilities under any kernel reduce to cdf differences. ``lo = -inf``
    yields ``(-inf, hi]`` and ``hi = +inf`` yields ``(lo, +inf)``.
    """

    parts: tuple[tuple[float, float], ...]

    @classmethod
    def from_pairs(cls, pairs) -> "IntervalUnion":
        """Normalize: drop empty parts, sort, merge touching parts."""
        cleaned = sorted((float(lo), float(hi)) for lo, hi in pairs if lo < hi)
        merged: list[tuple[float, float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return cls(tuple(merged))

    @classmethod
    def whole_line(cls) -> "IntervalUnion":
        return cls(((-math.inf, math.inf),))

    def complement(self) -> "IntervalUnion":
        pieces: list[tuple[float, float]] = []
        prev_hi = -math.inf
        for lo, hi in self.parts:
            if lo > prev_hi:
                pieces.append((prev_hi, lo))
            prev_hi = hi
        if prev_hi < math.inf:
            pieces.append((prev_hi, math.inf))
        return IntervalUnion(tuple(pieces))

    def intersect(self, other: "IntervalUnion") -> "IntervalUnion":
        pieces = []
        for lo1, hi1 in self.parts:
            for lo2, hi2 in other.parts:
                lo, hi = max(lo1, lo2), min(hi1, hi2)
                if lo < hi:
                    pieces.append((lo, hi))
        return IntervalUnion.from_pairs(pieces)

    def contains_point(self, c: float) -> bool:
        return any(lo < c <= hi for lo, hi in self.parts)

    def contains_interval(self, a: float, b: float) -> bool:
        """Whether the half-open interval ``(a, b]`` is a subset."""
        return any(lo <= a and b <= hi for lo, hi in self.parts)

    def meets_interval(self, a: float, b: float) -> bool:
        """Whether the half-open interval ``(a, b]`` intersects this union."""
        return any(b > lo and hi > a for lo, hi in self.parts)


# ---------------------------------------------------------------------------
# order-statistic cells and the rank-gap mass assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderCells:
    """Sorted cut points and the n+1 half-open cells they induce.

    Cell ``k`` is ``(cut[k-1], cut[k]]`` with the conventions ``cut[-1] = -inf``
    and ``cut[n] = +inf``. Tied values are kept as duplicate cuts; the cell
    between two equal cuts is a zero-width cell, read as a point mass at the
    tied value.
    """

    cuts: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.cuts) == 0:
            raise ValueError("order cells need at least one observation")
        if any(not math.isfinite(c) for c in self.cuts):
            raise ValueError("observations must be finite")
        if any(a > b for a, b in zip(self.cuts, self.cuts[1:])):
            raise ValueError("cuts must be sorted")

    @property
    def n(self) -> int:
        return len(self.cuts)

    @property
    def cell_count(self) -> int:
        return self.n + 1

    def cell_bounds(self, k: int) -> tuple[float, float]:
        if not 0 <= k <= self.n:
            raise IndexError(f"cell index {k} outside 0..{self.n}")
        lo = self.cuts[k - 1] if k > 0 else -math.inf
        hi = self.cuts[k] if k < self.n else math.inf
        return lo, hi

    def insert(self, y_new: float) -> "OrderCells":
        return order_cells(self.cuts + (float(y_new),))


def order_cells(values: Sequence[float]) -> OrderCells:
    """Cells of the order-statistic partition for the given observations."""
    vals = [float(v) for v in values]
    if len(vals) == 0:
        raise ValueError("order cells need at least one observation")
    return OrderCells(tuple(sorted(vals)))


def insert_and_recurse(cells: OrderCells, y_new: float) -> OrderCells:
    """One recursion step: add the new observation to the cut-point list.

    The new partition has one more cell and keeps every previous cut point,
    so building cells incrementally matches building them from scratch.
    """
    return cells.insert(y_new)


@dataclass(frozen=True)
class RankGapMass:
    """Probability masses over the n+1 cells, stored as exact rationals."""

    masses: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if len(self.masses) == 0:
            raise ValueError("mass vector must be nonempty")
        coerced = tuple(Fraction(m) for m in self.masses)
        object.__setattr__(self, "masses", coerced)
        if any(m < 0 for m in coerced):
            raise ValueError("cell masses must be nonnegative")
        if abs(float(sum(coerced) - 1)) > 1e-12:
            raise ValueError("cell masses must sum to 1")

    def __len__(self) -> int:
        return len(self.masses)

    def cumulative(self) -> tuple[Fraction, ...]:
        """Exact partial sums ``C_0 = 0, C_1, ..., C_{n+1} = sum``."""
        out = [Fraction(0)]
        for m in self.masses:
            out.append(out[-1] + m)
        return tuple(out)


def hill_mass(n: int) -> RankGapMass:
    """Equal mass 1/(n+1) on each of the n+1 rank-gap cells."""
    if n < 1:
        raise ValueError(f"need n >= 1 observations, got {n}")
    return RankGapMass(tuple(Fraction(1, n + 1) for _ in range(n + 1)))


def next_rank_distribution(n: int) -> np.ndarray:
    """Distribution of the next observation's rank among n+1: uniform."""
    if n < 1:
        raise ValueError(f"need n >= 1 observations, got {n}")
    return np.full(n + 1, 1.0 / (n + 1))


@dataclass(frozen=True)
class WithinCellCompletion:
    """Rule for the law inside each cell: uniform interiors, exponential tails.

    ``tail_scale`` is the scale of the exponential decay on the two unbounded
    cells, anchored at the extreme cut points.
    """

    tail_scale: float

    def __post_init__(self) -> None:
        if not self.tail_scale > 0:
            raise ValueError(f"tail scale must be positive, got {self.tail_scale}")


def default_completion(values: Sequence[float]) -> WithinCellCompletion:
    """Completion with tail scale ``max(sample IQR, 1e-6)``."""
    v = np.sort(np.asarray(values, dtype=float))
    q25, q75 = np.percentile(v, [25.0, 75.0])
    return WithinCellCompletion(tail_scale=max(float(q75 - q25), 1e-6))


# ---------------------------------------------------------------------------
# predictive kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BridgedKernel:
    """Full predictive law built from cells + masses + within-cell completion.

    The cdf places exactly the assigned mass on each cell: uniform on bounded
    interiors, exponential tails on the unbounded cells, a point mass at tied
    cut values.
    """

    cells: OrderCells
    mass: RankGapMass
    completion: WithinCellCompletion

    def __post_init__(self) -> None:
        if len(self.mass) != self.cells.cell_count:
            raise ValueError(
                f"mass vector length {len(self.mass)} does not match "
                f"{self.cells.cell_count} cells"
            )

    @cached_property
    def _cuts(self) -> np.ndarray:
        return np.asarray(self.cells.cuts, dtype=float)

    @cached_property
    def _masses(self) -> np.ndarray:
        return np.asarray([float(m) for m in self.mass.masses])

    @cached_property
    def _cum(self) -> np.ndarray:
        return np.asarray([float(c) for c in self.mass.cumulative()])

    def cell_mass(self, k: int) -> Fraction:
        return self.mass.masses[k]

    def cumulative_mass(self, k: int) -> Fraction:
        """Exact total mass of cells ``0..k-1`` (the cdf at cut point k)."""
        return self.mass.cumulative()[k]

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        cuts, masses, cum = self._cuts, self._masses, self._cum
        n = cuts.size
        s = self.completion.tail_scale
        r = np.searchsorted(cuts, y, side="right")
        out = np.empty_like(y)

        left = r == 0
        if np.any(left):
            out[left] = masses[0] * np.exp((y[left] - cuts[0]) / s)
        right = r == n
        if np.any(right):
            out[right] = cum[n] + masses[n] * (-np.expm1(-(y[right] - cuts[-1]) / s))
        mid = ~(left | right)
        if np.any(mid):
            k = r[mid]
            lo, hi = cuts[k - 1], cuts[k]
            width = hi - lo
            frac = np.where(width > 0.0, (y[mid] - lo) / np.where(width > 0.0, width, 1.0), 1.0)
            out[mid] = cum[k] + masses[k] * frac
        return float(out[0]) if scalar else out

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        scalar = p.ndim == 0
        p = np.atleast_1d(p)
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("quantile level must lie strictly inside (0, 1)")
        cuts, masses, cum = self._cuts, self._masses, self._cum
        n = cuts.size
        s = self.completion.tail_scale
        idx = np.searchsorted(cum, p, side="left")
        k = np.clip(idx - 1, 0, n)
        out = np.empty_like(p)

        left = k == 0
        if np.any(left):
            out[left] = cuts[0] + s * np.log(p[left] / masses[0])
        right = k == n
        if np.any(right):
            out[right] = cuts[-1] - s * np.log((1.0 - p[right]) / masses[n])
        mid = ~(left | right)
        if np.any(mid):
            km = k[mid]
            lo, hi = cuts[km - 1], cuts[km]
            m = masses[km]
            frac = np.where(m > 0.0, (p[mid] - cum[km]) / np.where(m > 0.0, m, 1.0), 0.0)
            out[mid] = lo + frac * (hi - lo)
        return float(out[0]) if scalar else out

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.quantile(rng.random(n) * (1.0 - 2e-16) + 1e-16)

    def sample(self, n: int, seed: SeedSpec) -> np.ndarray:
        return self.draw(seed.rng(), n)

    @cached_property
    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and weights with ``sum(w) = 1``, ``E f = w @ f(x)``."""
        cuts, masses = self._cuts, self._masses
        n = cuts.size
        s = self.completion.tail_scale
        gl_x, gl_w = leggauss(_GL_NODES)
        lag_x, lag_w = laggauss(_LAGUERRE_NODES)
        pts = [cuts[0] - s * lag_x]
        wts = [masses[0] * lag_w]
        for k in range(1, n):
            lo, hi = cuts[k - 1], cuts[k]
            if hi > lo:
                pts.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * gl_x)
                wts.append(masses[k] * 0.5 * gl_w)
            else:
                pts.append(np.array([lo]))
                wts.append(np.array([masses[k]]))
        pts.append(cuts[-1] + s * lag_x)
        wts.append(masses[n] * lag_w)
        return np.concatenate(pts), np.concatenate(wts)

    def quadrature_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self._nodes

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Deterministic expectation of a (vectorized) test function."""
        pts, wts = self._nodes
        return float(wts @ np.asarray(fn(pts), dtype=float))

    def expect_mc(
        self, fn: Callable[[np.ndarray], np.ndarray], mc_size: int, seed: SeedSpec
    ) -> tuple[float, float]:
        """Monte Carlo expectation with standard error, for cross-checks."""
        vals = np.asarray(fn(self.sample(mc_size, seed)), dtype=float)
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_size))

    def describe(self) -> str:
        """Plain-text record: variant, cut points, exact masses, tail scale."""
        cuts = ",".join(repr(c) for c in self.cells.cuts)
        masses = ",".join(str(m) for m in self.mass.masses)
        return (
            f"bridged cuts=[{cuts}] masses=[{masses}] "
            f"tail_scale={self.completion.tail_scale!r}"
        )


@dataclass(frozen=True)
class GaussianPredictive:
    """Normal one-step predictive law."""

    mean: float
    var: float

    def __post_init__(self) -> None:
        if not self.var > 0:
            raise ValueError(f"predictive variance must be positive, got {self.var}")

    def cdf(self, y):
        return special.ndtr((np.asarray(y, dtype=float) - self.mean) / math.sqrt(self.var))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("quantile level must lie strictly inside (0, 1)")
        return self.mean + math.sqrt(self.var) * special.ndtri(p)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * rng.standard_normal(n)

    def sample(self, n: int, seed: SeedSpec) -> np.ndarray:
        return self.draw(seed.rng(), n)

    @cached_property
    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        h_x, h_w = hermgauss(_HERMITE_NODES)
        return self.mean + math.sqrt(2.0 * self.var) * h_x, h_w / math.sqrt(math.pi)

    def quadrature_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self._nodes

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        pts, wts = self._nodes
        return float(wts @ np.asarray(fn(pts), dtype=float))

    def expect_mc(
        self, fn: Callable[[np.ndarray], np.ndarray], mc_size: int, seed: SeedSpec
    ) -> tuple[float, float]:
        vals = np.asarray(fn(self.sample(mc_size, seed)), dtype=float)
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_size))

    def describe(self) -> str:
        return f"gaussian-predictive mean={self.mean!r} var={self.var!r}"


@dataclass(frozen=True)
class ConjugateGaussian(GaussianPredictive):
    """Posterior predictive of the conjugate normal-mean model.

    Carries the prior and data summary so that serialized records are
    reproducible; the predictive law itself is ``Normal(mean, var)``.
    """

    prior_mean: float = 0.0
    prior_var: float = 1.0
    noise_var: float = 1.0
    n_obs: int = 0
    sum_obs: float = 0.0

    def describe(self) -> str:
        return (
            f"conjugate-gaussian mean={self.mean!r} var={self.var!r} "
            f"prior_mean={self.prior_mean!r} prior_var={self.prior_var!r} "
            f"noise_var={self.noise_var!r} n={self.n_obs} sum={self.sum_obs!r}"
        )


PredictiveKernel = BridgedKernel | GaussianPredictive


def bridge_kernel(
    cells: OrderCells, mass: RankGapMass, completion: WithinCellCompletion
) -> BridgedKernel:
    """Promote a cell mass assignment to a full predictive law."""
    return BridgedKernel(cells, mass, completion)


def bayes_predictive(
    prior_mean: float,
    prior_var: float,
    noise_var: float,
    data: Sequence[float],
) -> ConjugateGaussian:
    """Conjugate normal posterior predictive for known noise variance.

    Posterior mean and variance follow the standard precision-weighted
    updates; ``prior_var = inf`` gives the flat-prior limit (requires data).
    Data enters only through ``(n, sum)``; the sum is exactly rounded, so the
    result is invariant under permutations of the data.
    """
    if noise_var <= 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    vals = [float(v) for v in data]
    n = len(vals)
    total = math.fsum(vals)
    if math.isinf(prior_var):
        if n == 0:
            raise ValueError("flat-prior predictive needs at least one observation")
        post_mean = total / n
        post_var = noise_var / n
    else:
        if prior_var <= 0:
            raise ValueError(f"prior variance must be positive, got {prior_var}")
        precision = 1.0 / prior_var + n / noise_var
        post_mean = (prior_mean / prior_var + total / noise_var) / precision
        post_var = 1.0 / precision
    return ConjugateGaussian(
        mean=post_mean,
        var=noise_var + post_var,
        prior_mean=prior_mean,
        prior_var=prior_var,
        noise_var=noise_var,
        n_obs=n,
        sum_obs=total,
    )


def hill_bridge_family(
    tail_scale: float | None = None,
) -> Callable[[Sequence[float]], BridgedKernel]:
    """History -> equal-gap bridged kernel, IQR tails unless a scale is fixed."""

    def build(history: Sequence[float]) -> BridgedKernel:
        cells = order_cells(history)
        completion = (
            WithinCellCompletion(tail_scale)
            if tail_scale is not None
            else default_completion(history)
        )
        return bridge_kernel(cells, hill_mass(cells.n), completion)

    return build


def conjugate_family(
    prior_mean: float, prior_var: float, noise_var: float
) -> Callable[[Sequence[float]], ConjugateGaussian]:
    """History -> conjugate Gaussian posterior predictive."""

    def build(history: Sequence[float]) -> ConjugateGaussian:
        return bayes_predictive(prior_mean, prior_var, noise_var, history)

    return build


# ---------------------------------------------------------------------------
# kernel metric
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelMetricConfig:
    """Fixed ingredients of the kernel metric.

    Test functions are ``phi_j(y) = tanh(a*y + b) / max(1, a)`` over the
    (slope, offset) grid, enumerated slope-major; each has sup-norm and
    Lipschitz constant at most 1. Histories are drawn from a product of
    standard normals. ``mc_size`` histories are split into ``batches`` blocks
    for the standard error.
    """

    slopes: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    offsets: tuple[float, ...] = (-2.0, -0.5, 0.5, 2.0)
    mc_size: int = 4000
    batches: int = 20

    def test_functions(self) -> tuple[tuple[float, float], ...]:
        return tuple(product(self.slopes, self.offsets))


def _phi_table(cfg: KernelMetricConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ab = np.asarray(cfg.test_functions(), dtype=float)
    a, b = ab[:, 0], ab[:, 1]
    return a, b, np.maximum(1.0, a)


def _phi_expectations(kernel, a, b, denom) -> np.ndarray:
    pts, wts = kernel.quadrature_nodes()
    vals = np.tanh(a[:, None] * pts[None, :] + b[:, None]) / denom[:, None]
    return vals @ wts


def kernel_distance(
    family1: Callable[[np.ndarray], object],
    family2: Callable[[np.ndarray], object],
    n: int,
    cfg: KernelMetricConfig = KernelMetricConfig(),
    seed: SeedSpec = SeedSpec(0),
) -> tuple[float, float]:
    """Monte Carlo estimate of the kernel metric between two kernel families.

    Histories of length ``n`` are drawn from the product standard normal; each
    family maps a history to a kernel, whose expectations of the test-function
    table are computed by deterministic quadrature. Per test function the
    empirical L2 distance over histories is clipped at 1 and combined with
    weights ``2^-j``. Returns the estimate and a batch-means standard error.

    The same histories drive both families, so the estimate is exactly zero
    when the families coincide and exactly symmetric in its arguments.
    """
    if cfg.mc_size < 2:
        raise ValueError(f"mc_size must be >= 2, got {cfg.mc_size}")
    if n < 1:
        raise ValueError(f"history length must be >= 1, got {n}")
    rng = seed.rng()
    histories = rng.standard_normal((cfg.mc_size, n))
    a, b, denom = _phi_table(cfg)
    J = a.size
    f1 = np.empty((cfg.mc_size, J))
    f2 = np.empty((cfg.mc_size, J))
    for i in range(cfg.mc_size):
        f1[i] = _phi_expectations(family1(histories[i]), a, b, denom)
        f2[i] = _phi_expectations(family2(histories[i]), a, b, denom)
    sq = (f1 - f2) ** 2
    weights = 0.5 ** np.arange(1, J + 1)

    def combine(block: np.ndarray) -> float:
        norms = np.sqrt(block.mean(axis=0))
        return float(weights @ np.minimum(norms, 1.0))

    estimate = combine(sq)
    n_batches = min(cfg.batches, cfg.mc_size)
    parts = np.array_split(sq, n_batches, axis=0)
    batch_vals = np.asarray([combine(p) for p in parts])
    se = float(batch_vals.std(ddof=1) / math.sqrt(n_batches))
    return estimate, se


# ---------------------------------------------------------------------------
# belief / plausibility and the permutation-symmetry probe
# ---------------------------------------------------------------------------

def belief_plausibility(
    mass: RankGapMass, cells: OrderCells, event: IntervalUnion
) -> tuple[Fraction, Fraction]:
    """Lower and upper probability of an event under a cell mass assignment.

    Belief sums the masses of cells contained in the event; plausibility sums
    the masses of cells that intersect it. Both are exact rationals, so
    ``Bel(A) + Pl(complement of A) == 1`` holds identically.
    """
    if len(mass) != cells.cell_count:
        raise ValueError("mass vector does not match the cell count")
    bel = Fraction(0)
    pl = Fraction(0)
    for k in range(cells.cell_count):
        lo, hi = cells.cell_bounds(k)
        if lo == hi:  # zero-width cell: point mass at a tied value
            inside = event.contains_point(lo)
            contained, meets = inside, inside
        else:
            contained = event.contains_interval(lo, hi)
            meets = event.meets_interval(lo, hi)
        if contained:
            bel += mass.masses[k]
        if meets:
            pl += mass.masses[k]
    return bel, pl


def rank_invariance_check(
    kernel_builder: Callable[[Sequence[float]], object],
    data: Sequence[float],
    permutation: Sequence[int],
) -> bool:
    """Whether a kernel builder returns identical kernels under a permutation.

    Exact comparison of the built kernels (cut points, masses, completion
    parameters, or posterior parameters). This is the testable shadow of the
    requirement that the mechanism use the history only through a
    permutation-symmetric calibration summary.
    """
    idx = list(permutation)
    if sorted(idx) != list(range(len(data))):
        raise ValueError("permutation must be a bijection of the data indices")
    data = list(data)
    k1 = kernel_builder(data)
    k2 = kernel_builder([data[i] for i in idx])
    return k1 == k2
