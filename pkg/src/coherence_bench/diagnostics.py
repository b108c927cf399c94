"""Shared experiment harness: reports, statistical checks, convexity probe.

Every experiment emits an :class:`ExperimentReport`: a seeded, byte-stable
record of parameters, metric estimates with standard errors, and pass/fail
checks expressed in standard-error units. The conglomerability probe verifies
the law-of-total-probability convexity that any countably additive kernel
must satisfy over a finite partition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .dist import SeedSpec
from .rankgap import IntervalUnion

__all__ = [
    "MetricValue",
    "Check",
    "ExperimentReport",
    "FinitePartition",
    "ProbeResult",
    "chi_square_gof",
    "conglomerability_probe",
    "assert_within_se",
]

EXACT = "exact"


@dataclass(frozen=True)
class MetricValue:
    """Estimate with a standard error; ``se=None`` marks an exact value."""

    estimate: float
    se: float | None = None


@dataclass(frozen=True)
class Check:
    """Outcome of one assertion tied to a metric.

    ``mode`` is ``two-sided`` (|estimate - target| <= k*se), ``at-least``
    (estimate >= target - k*se) or ``at-most`` (estimate <= target + k*se).
    ``margin_se`` is |estimate - target| / se, or ``"exact"`` for exact
    metrics.
    """

    name: str
    metric: str
    target: float
    passed: bool
    margin_se: float | str
    mode: str = "two-sided"
    k_sigmas: float = 3.0


def assert_within_se(
    estimate: float, target: float, se: float | None, k_sigmas: float = 3.0
) -> tuple[bool, float | str]:
    """Pass iff the estimate is within ``k_sigmas`` standard errors of target.

    With ``se=None`` (or zero) the comparison is exact and the margin is
    reported as ``"exact"`` on success.
    """
    if se is None or se == 0.0:
        return (estimate == target, EXACT if estimate == target else math.inf)
    if se < 0.0:
        raise ValueError(f"standard error must be nonnegative, got {se}")
    margin = abs(estimate - target) / se
    return margin <= k_sigmas, margin


@dataclass
class ExperimentReport:
    """Record of one diagnostic run; serialization is byte-stable."""

    experiment_id: str
    parameters: dict = field(default_factory=dict)
    seed: SeedSpec = SeedSpec(0)
    version: str = "0.1.0"
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add_metric(self, name: str, estimate: float, se: float | None = None) -> None:
        self.metrics[name] = MetricValue(float(estimate), None if se is None else float(se))

    def check_within(
        self, metric: str, target: float, k_sigmas: float = 3.0, name: str | None = None
    ) -> bool:
        m = self.metrics[metric]
        ok, margin = assert_within_se(m.estimate, target, m.se, k_sigmas)
        self.checks.append(Check(name or metric, metric, target, ok, margin, "two-sided", k_sigmas))
        return ok

    def check_bound(
        self,
        metric: str,
        target: float,
        mode: str,
        k_sigmas: float = 3.0,
        name: str | None = None,
    ) -> bool:
        """One-sided check against a target.

        ``at-least``/``at-most`` allow ``k_sigmas`` standard errors of slack
        toward the target; ``exceeds``/``below`` demand separation from the
        target by at least ``k_sigmas`` standard errors.
        """
        m = self.metrics[metric]
        se = m.se if m.se is not None else 0.0
        if mode == "at-least":
            ok = m.estimate >= target - k_sigmas * se
        elif mode == "at-most":
            ok = m.estimate <= target + k_sigmas * se
        elif mode == "exceeds":
            ok = m.estimate >= target + k_sigmas * se and m.estimate > target
        elif mode == "below":
            ok = m.estimate <= target - k_sigmas * se and m.estimate < target
        else:
            raise ValueError(f"unknown bound mode {mode!r}")
        margin = abs(m.estimate - target) / se if se > 0 else (EXACT if ok else math.inf)
        self.checks.append(Check(name or metric, metric, target, ok, margin, mode, k_sigmas))
        return ok

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_doc(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "parameters": {k: self.parameters[k] for k in sorted(self.parameters)},
            "seed": {"master_seed": self.seed.master_seed, "stream_id": self.seed.stream_id},
            "version": self.version,
            "metrics": {
                k: {"estimate": v.estimate, "se": EXACT if v.se is None else v.se}
                for k, v in sorted(self.metrics.items())
            },
            "checks": [
                {
                    "name": c.name,
                    "metric": c.metric,
                    "target": c.target,
                    "passed": c.passed,
                    "margin_se": c.margin_se if isinstance(c.margin_se, str) else float(c.margin_se),
                    "mode": c.mode,
                    "k_sigmas": c.k_sigmas,
                }
                for c in self.checks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))


def chi_square_gof(
    observed: Sequence[int], expected_probs: Sequence[float]
) -> tuple[float, float]:
    """Pearson goodness-of-fit statistic and upper-tail p-value.

    ``k - 1`` degrees of freedom; requires at least two cells, probabilities
    summing to one, and expected counts of at least 5 per cell. The p-value
    uses the regularized incomplete gamma function.
    """
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    if obs.size != probs.size:
        raise ValueError("observed and expected lengths differ")
    if obs.size < 2:
        raise ValueError("chi-square needs at least two cells")
    if abs(probs.sum() - 1.0) > 1e-8:
        raise ValueError("expected probabilities must sum to 1")
    expected = obs.sum() * probs
    if np.any(expected < 5.0):
        raise ValueError("expected count below 5 in some cell; enlarge the sample")
    stat = float(((obs - expected) ** 2 / expected).sum())
    dof = obs.size - 1
    return stat, float(special.gammaincc(dof / 2.0, stat / 2.0))


@dataclass(frozen=True)
class FinitePartition:
    """Finite partition of the line into half-open interval cells."""

    cuts: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(a >= b for a, b in zip(self.cuts, self.cuts[1:])):
            raise ValueError("partition cuts must be strictly increasing")
        if any(not math.isfinite(c) for c in self.cuts):
            raise ValueError("partition cuts must be finite")

    def cells(self) -> tuple[IntervalUnion, ...]:
        edges = (-math.inf,) + self.cuts + (math.inf,)
        return tuple(
            IntervalUnion(((edges[i], edges[i + 1]),)) for i in range(len(edges) - 1)
        )


@dataclass(frozen=True)
class ProbeResult:
    p_event: float
    cond_min: float
    cond_max: float
    within: bool


def _event_probability(kernel, event: IntervalUnion) -> float:
    return float(sum(kernel.cdf(hi) - kernel.cdf(lo) for lo, hi in event.parts))


def conglomerability_probe(
    kernel,
    event: IntervalUnion,
    partition: FinitePartition,
    tol: float = 1e-9,
) -> ProbeResult:
    """Check P(B) lies between the extreme conditionals over a partition.

    For a countably additive kernel, P(B) is a convex combination of the
    P(B | A_m), so it must lie in [min, max] up to tolerance. Cells of the
    partition must carry mass at least 1e-9 under the kernel.
    """
    p_event = _event_probability(kernel, event)
    conds = []
    for cell in partition.cells():
        p_cell = _event_probability(kernel, cell)
        if p_cell < 1e-9:
            raise ValueError(
                f"partition cell {cell.parts} has kernel mass {p_cell:.3e} < 1e-9"
            )
        conds.append(_event_probability(kernel, event.intersect(cell)) / p_cell)
    lo, hi = min(conds), max(conds)
    return ProbeResult(p_event, lo, hi, lo - tol <= p_event <= hi + tol)
