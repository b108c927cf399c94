"""Probability primitives: one-dimensional laws, seeded sampling, quadrature.

Everything downstream (conformal calibration, rank-gap kernels, design-shift
experiments) consumes the laws and the residual-mixture machinery defined here.
All sampling is routed through :class:`SeedSpec`, a counter-based splittable
seed so that replicate-parallel Monte Carlo stays bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

__all__ = [
    "SeedSpec",
    "UnivariateLaw",
    "Uniform",
    "Beta",
    "Normal",
    "Exponential",
    "PointMass",
    "ConditionalModel",
    "empirical_quantile",
    "mixture_residual_cdf",
    "mixture_residual_quantile",
    "tv_gaussian_shift",
]

_QUAD_EPSABS = 1e-10
_QUAD_CHECK = 1e-8
_BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class SeedSpec:
    """Seed for a reproducible random stream.

    The stream is a Philox counter-based generator keyed by
    ``(master_seed, stream_id)``: identical pairs reproduce identical sample
    paths bit for bit, and distinct ``stream_id`` values give statistically
    independent streams, so replicates can be farmed out in any order.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.stream_id < 0:
            raise ValueError(f"stream_id must be nonnegative, got {self.stream_id}")

    def rng(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array(
            [self.master_seed % 2**64, self.stream_id % 2**64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, stream_id: int) -> "SeedSpec":
        """Sibling seed with the same master seed and a different stream id."""
        return SeedSpec(self.master_seed, stream_id)


class UnivariateLaw:
    """Base class for the one-dimensional laws used throughout.

    Subclasses provide ``cdf``, ``quantile``, ``pdf``, ``support`` and the
    generator-level ``draw``; ``sample`` is the seeded wrapper around ``draw``.
    CDFs are nondecreasing and right-continuous with limits 0 and 1, and
    ``quantile`` inverts ``cdf`` at continuity points.
    """

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed: SeedSpec) -> np.ndarray:
        """``n`` i.i.d. draws, deterministic given ``seed``."""
        if n < 0:
            raise ValueError(f"sample size must be nonnegative, got {n}")
        return self.draw(seed.rng(), n)

    def _check_p(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("quantile level must lie strictly inside (0, 1)")
        return p


@dataclass(frozen=True)
class Uniform(UnivariateLaw):
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"Uniform requires lo < hi, got ({self.lo}, {self.hi})")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def quantile(self, p):
        return self.lo + (self.hi - self.lo) * self._check_p(p)

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def draw(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random(n)


@dataclass(frozen=True)
class Beta(UnivariateLaw):
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"Beta requires positive shapes, got ({self.alpha}, {self.beta})")

    def cdf(self, x):
        return special.betainc(self.alpha, self.beta, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x < 1.0)
        xs = np.where(inside, x, 0.5)
        lognum = (self.alpha - 1.0) * np.log(xs) + (self.beta - 1.0) * np.log1p(-xs)
        logb = special.betaln(self.alpha, self.beta)
        return np.where(inside, np.exp(lognum - logb), 0.0)

    def quantile(self, p):
        return special.betaincinv(self.alpha, self.beta, self._check_p(p))

    def support(self) -> tuple[float, float]:
        return (0.0, 1.0)

    def draw(self, rng, n):
        # ratio-of-gammas construction, easy to property-test against the cdf
        g1 = rng.standard_gamma(self.alpha, n)
        g2 = rng.standard_gamma(self.beta, n)
        return g1 / (g1 + g2)


@dataclass(frozen=True)
class Normal(UnivariateLaw):
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self) -> None:
        if self.var <= 0:
            raise ValueError(f"Normal requires var > 0, got {self.var}")

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / math.sqrt(self.var))

    def pdf(self, x):
        sd = math.sqrt(self.var)
        z = (np.asarray(x, dtype=float) - self.mean) / sd
        return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))

    def quantile(self, p):
        return self.mean + math.sqrt(self.var) * special.ndtri(self._check_p(p))

    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def draw(self, rng, n):
        return self.mean + math.sqrt(self.var) * rng.standard_normal(n)


@dataclass(frozen=True)
class Exponential(UnivariateLaw):
    rate: float

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError(f"Exponential requires rate > 0, got {self.rate}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def quantile(self, p):
        return -np.log1p(-self._check_p(p)) / self.rate

    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def draw(self, rng, n):
        return rng.standard_exponential(n) / self.rate


@dataclass(frozen=True)
class PointMass(UnivariateLaw):
    value: float

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def pdf(self, x):  # degenerate; no density
        raise NotImplementedError("PointMass has no density")

    def quantile(self, p):
        return np.full_like(self._check_p(p), self.value)

    def support(self) -> tuple[float, float]:
        return (self.value, self.value)

    def draw(self, rng, n):
        return np.full(n, self.value, dtype=float)


@dataclass(frozen=True)
class ConditionalModel:
    """Heteroskedastic regression law ``Y = f(X) + sigma(X) * eps``.

    ``mean_fn`` and ``scale_fn`` must accept numpy arrays. The noise law
    defaults to a standard normal, in which case ``Law(Y | X=x)`` is
    ``Normal(f(x), sigma(x)^2)``.
    """

    mean_fn: Callable[[np.ndarray], np.ndarray]
    scale_fn: Callable[[np.ndarray], np.ndarray]
    noise: UnivariateLaw = Normal(0.0, 1.0)

    def _scale(self, x: np.ndarray) -> np.ndarray:
        s = np.asarray(self.scale_fn(x), dtype=float)
        if np.any(s <= 0.0):
            raise ValueError("scale_fn must be positive on the design support")
        return s

    def draw_y(self, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
        """Responses at covariates ``x`` using an existing generator."""
        x = np.asarray(x, dtype=float)
        eps = self.noise.draw(rng, x.size).reshape(x.shape)
        return np.asarray(self.mean_fn(x), dtype=float) + self._scale(x) * eps

    def sample_y(self, x: np.ndarray, seed: SeedSpec) -> np.ndarray:
        return self.draw_y(seed.rng(), x)

    def y_cdf(self, y, x):
        """cdf of Y given X=x, i.e. noise cdf of ``(y - f(x)) / sigma(x)``."""
        x = np.asarray(x, dtype=float)
        return self.noise.cdf((np.asarray(y, dtype=float) - self.mean_fn(x)) / self._scale(x))

    def y_quantile(self, p, x):
        """Conditional quantile ``f(x) + sigma(x) * noise_quantile(p)``."""
        x = np.asarray(x, dtype=float)
        return np.asarray(self.mean_fn(x), dtype=float) + self._scale(x) * self.noise.quantile(p)


def empirical_quantile(values, p: float, kind: str = "conformal") -> float:
    """Empirical quantile under the conformal rank convention.

    Returns the ``ceil(p * (m + 1))``-th smallest of the ``m`` values, clamped
    to the maximum when the index exceeds ``m``. This is the convention under
    which split-conformal coverage is exact.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empirical_quantile of an empty sample")
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    if kind != "conformal":
        raise ValueError(f"unknown quantile convention {kind!r}")
    m = v.size
    k = min(int(math.ceil(p * (m + 1))), m)
    return float(np.sort(v)[k - 1])


def _half_normal_cdf(t):
    # 2*Phi(t) - 1 for t >= 0
    return special.erf(np.asarray(t, dtype=float) / math.sqrt(2.0))


def mixture_residual_cdf(
    design: UnivariateLaw,
    scale_fn: Callable[[np.ndarray], np.ndarray],
    r: float,
) -> float:
    """cdf of the residual magnitude ``sigma(X) * |Z|`` at ``r``.

    ``X`` follows the design law, ``Z`` is an independent standard normal.
    Computed as the design-mixture of half-normal cdfs by deterministic
    adaptive quadrature (absolute tolerance 1e-10); returns 0 for ``r < 0``.
    """
    if r < 0.0:
        return 0.0
    if r == 0.0:
        return 0.0
    if isinstance(design, PointMass):
        s = float(np.asarray(scale_fn(np.asarray(design.value))))
        if s <= 0.0:
            raise ValueError("scale_fn must be positive on the design support")
        return float(_half_normal_cdf(r / s))
    lo, hi = design.support()

    def integrand(x):
        s = np.asarray(scale_fn(np.asarray(x)), dtype=float)
        return _half_normal_cdf(r / s) * design.pdf(x)

    value, abserr = integrate.quad(integrand, lo, hi, epsabs=_QUAD_EPSABS, limit=200)
    if abserr > _QUAD_CHECK:
        raise ArithmeticError(
            f"mixture cdf quadrature did not converge: r={r}, estimated error {abserr:.3e}"
        )
    return float(min(max(value, 0.0), 1.0))


def mixture_residual_quantile(
    design: UnivariateLaw,
    scale_fn: Callable[[np.ndarray], np.ndarray],
    p: float,
) -> float:
    """Inverse of :func:`mixture_residual_cdf` by bracketed bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    lo, hi = 0.0, 1.0
    grow = 0
    while mixture_residual_cdf(design, scale_fn, hi) < p:
        hi *= 2.0
        grow += 1
        if grow > 60:
            raise ArithmeticError(f"failed to bracket mixture quantile at p={p}")
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mixture_residual_cdf(design, scale_fn, mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def tv_gaussian_shift(a: float, n: int) -> float:
    """Total variation distance between ``N(-a,1)^n`` and ``N(+a,1)^n``.

    Closed form ``2*Phi(a*sqrt(n)) - 1`` via sufficiency of the sample mean.
    """
    if a <= 0.0:
        raise ValueError(f"shift must be positive, got {a}")
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    return float(2.0 * special.ndtr(a * math.sqrt(n)) - 1.0)
