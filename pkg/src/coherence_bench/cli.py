"""Command-line experiment runner.

Maps subcommands to the diagnostic experiments, runs them under a single
64-bit seed (one stream per experiment), and writes flat CSV and/or JSON
reports. Exit code 0 means every recorded check passed, 1 an assertion
failure, 2 a usage error, 3 an I/O failure. Outputs are byte-identical across
runs with identical configuration.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .conformal import coverage_audit, full_conformal_set, Identity
from .deficiency import (
    gaussian_testing_risks,
    deficiency_lower_bound,
    rank_ancillarity_check,
    rank_minimax_location,
    tv_gaussian_shift,
)
from .diagnostics import EXACT, ExperimentReport, chi_square_gof
from .dist import Beta, ConditionalModel, Normal, SeedSpec, Uniform
from .extensionality import (
    calibration_gap_mc,
    canonical_design_pair,
    cqr_transport_experiment,
    population_gap,
)
from .ppi import (
    information_compare,
    ppi_slope_simulation,
    residual_scale_expectation,
    ridge_population_slope,
    two_pipeline_experiment,
)
from .rankgap import (
    KernelMetricConfig,
    conjugate_family,
    hill_bridge_family,
    kernel_distance,
)
from scipy import integrate

__all__ = ["RunConfig", "run", "emit_csv", "emit_json", "main"]

SUBCOMMANDS = (
    "coverage",
    "ranks",
    "extensionality",
    "cqr-transport",
    "deficiency",
    "ppi",
    "kernel-distance",
    "all",
)

OUT_DIR_ENV = "COHERENCE_BENCH_OUT"

CSV_COLUMNS = (
    "experiment_id",
    "metric",
    "estimate",
    "se",
    "target",
    "pass",
    "margin_se",
    "seed",
    "version",
)


@dataclass
class RunConfig:
    subcommand: str
    alpha: float = 0.1
    reps: int = 10_000
    seed: int = 42
    out_dir: str = "bench-out"
    fmt: str = "csv"
    n_cal: int = 99
    m: int = 400
    a: float = 1.0
    n: int = 5
    tau: float = 0.1
    sigma: float = 1.0
    grid_size: int = 2001

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.fmt not in ("csv", "json", "both"):
            raise ValueError(f"unknown format {self.fmt!r}")
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return format(float(x), ".12g")


def emit_csv(report: ExperimentReport, path: str) -> None:
    """One data row per metric, joined with its first recorded check."""
    by_metric = {}
    for c in report.checks:
        by_metric.setdefault(c.metric, c)
    lines = [",".join(CSV_COLUMNS)]
    for name, m in report.metrics.items():
        c = by_metric.get(name)
        lines.append(
            ",".join(
                [
                    report.experiment_id,
                    name,
                    _fmt(m.estimate),
                    EXACT if m.se is None else _fmt(m.se),
                    _fmt(c.target) if c else "",
                    _fmt(c.passed) if c else "",
                    (_fmt(c.margin_se) if c else ""),
                    str(report.seed.master_seed),
                    report.version,
                ]
            )
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_json(report: ExperimentReport, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(report.to_json() + "\n")


def _hetero_model() -> ConditionalModel:
    return ConditionalModel(mean_fn=lambda x: x, scale_fn=lambda x: 1.0 + x)


def run_coverage(cfg: RunConfig) -> ExperimentReport:
    """Marginal coverage of split/full/CQR under a heteroskedastic Gaussian DGP."""
    seed = SeedSpec(cfg.seed, stream_id=1)
    rep = ExperimentReport(
        "coverage",
        {"alpha": cfg.alpha, "n_cal": cfg.n_cal, "reps": cfg.reps, "grid_size": cfg.grid_size},
        seed,
        __version__,
    )
    model = _hetero_model()
    design = Uniform(0.0, 1.0)
    k = min(int(math.ceil((1.0 - cfg.alpha) * (cfg.n_cal + 1))), cfg.n_cal)
    target = k / (cfg.n_cal + 1)
    for i, method in enumerate(("split", "full", "cqr")):
        cov, se = coverage_audit(
            model, design, method, cfg.alpha, cfg.n_cal, cfg.reps, seed.stream(10 + i)
        )
        rep.add_metric(f"coverage_{method}", cov, se)
        rep.check_within(f"coverage_{method}", target, 3.0)
        rep.check_bound(f"coverage_{method}", 1.0 - cfg.alpha, "at-least", 3.0,
                        name=f"coverage_{method}_lower_bound")

    # grid consistency: grid-based p-values match the order-statistic formula
    rng = seed.stream(20).rng()
    data = np.sort(rng.standard_normal(8))
    grid = np.linspace(data.min() - 2.0, data.max() + 2.0, cfg.grid_size)
    counts = (data[None, :] >= grid[:, None]).sum(axis=1)
    formula = (counts + 1) / (data.size + 1)
    pset = full_conformal_set([(0.0, y) for y in data], Identity(), cfg.alpha, 0.0, grid)
    accepted_formula = formula > cfg.alpha
    accepted_set = np.array([pset.contains(g) for g in grid])
    rep.add_metric("grid_formula_mismatches", float(np.sum(accepted_formula != accepted_set)))
    rep.check_within("grid_formula_mismatches", 0.0)
    return rep


def run_ranks(cfg: RunConfig) -> ExperimentReport:
    """Uniformity of the next observation's rank among n + 1 positions."""
    seed = SeedSpec(cfg.seed, stream_id=2)
    rep = ExperimentReport("ranks", {"n": cfg.n, "reps": cfg.reps}, seed, __version__)
    rng = seed.rng()
    y = rng.standard_normal((cfg.reps, cfg.n + 1))
    ranks = 1 + (y[:, :-1] < y[:, [-1]]).sum(axis=1)
    counts = np.bincount(ranks - 1, minlength=cfg.n + 1)
    stat, p = chi_square_gof(counts, np.full(cfg.n + 1, 1.0 / (cfg.n + 1)))
    rep.add_metric("chi_square_statistic", stat)
    rep.add_metric("chi_square_p_value", p)
    rep.check_bound("chi_square_p_value", 0.001, "at-least", 0.0)
    return rep


def run_extensionality(cfg: RunConfig) -> ExperimentReport:
    """Population and calibration-scale design-shift gaps."""
    seed = SeedSpec(cfg.seed, stream_id=3)
    rep = ExperimentReport(
        "extensionality", {"alpha": cfg.alpha, "m": cfg.m, "reps": cfg.reps}, seed, __version__
    )
    pop = population_gap(cfg.alpha)
    rep.add_metric("population_gap", pop.gap)
    rep.check_bound("population_gap", 0.01, "at-least", 0.0)
    control = population_gap(cfg.alpha, scale_fn=lambda x: np.full_like(np.asarray(x, float), 1.5))
    rep.add_metric("homoskedastic_gap", control.gap)
    rep.check_bound("homoskedastic_gap", 1e-7, "at-most", 0.0)
    mc = calibration_gap_mc(canonical_design_pair(), cfg.alpha, cfg.m, cfg.reps, seed.stream(30))
    rep.add_metric("own_side_freq_design1", mc.prob_above_1, mc.se_1)
    rep.add_metric("own_side_freq_design2", mc.prob_below_2, mc.se_2)
    rep.check_bound("own_side_freq_design1", 0.0, "exceeds", 5.0)
    rep.check_bound("own_side_freq_design2", 0.0, "exceeds", 5.0)
    rep.check_bound("own_side_freq_design1", 0.5, "at-least", 0.0, name="own_side_majority_1")
    rep.check_bound("own_side_freq_design2", 0.5, "at-least", 0.0, name="own_side_majority_2")
    return rep


def run_cqr_transport(cfg: RunConfig) -> ExperimentReport:
    """CQR calibration correction under a design shifted toward high variance."""
    seed = SeedSpec(cfg.seed, stream_id=4)
    n_cal = 50 if cfg.n_cal == 99 else cfg.n_cal
    reps = max(cfg.reps, 20_000)
    rep = ExperimentReport(
        "cqr_transport", {"alpha": cfg.alpha, "n_cal": n_cal, "reps": reps}, seed, __version__
    )
    r = cqr_transport_experiment(cfg.alpha, n_cal, reps, seed)
    rep.add_metric("mean_correction_unif", r.mean_correction_1, r.se_correction_1)
    rep.add_metric("mean_correction_beta", r.mean_correction_2, r.se_correction_2)
    rep.add_metric("correction_gap", r.correction_gap, r.correction_gap_se)
    rep.add_metric("coverage_unif", r.coverage_1, r.coverage_se_1)
    rep.add_metric("coverage_beta", r.coverage_2, r.coverage_se_2)
    rep.check_bound("correction_gap", 0.0, "exceeds", 3.0)
    rep.check_bound("coverage_unif", 1.0 - cfg.alpha, "at-least", 3.0)
    rep.check_bound("coverage_beta", 1.0 - cfg.alpha, "at-least", 3.0)
    return rep


def run_deficiency(cfg: RunConfig) -> ExperimentReport:
    """TV closed form, testing risks, ancillarity, and the rank minimax gap."""
    seed = SeedSpec(cfg.seed, stream_id=5)
    rep = ExperimentReport(
        "deficiency", {"a": cfg.a, "n": cfg.n, "reps": cfg.reps}, seed, __version__
    )

    worst = 0.0
    for a in (0.1, 0.5, 1.0, 2.0):
        for n in (1, 4, 16):
            closed = tv_gaussian_shift(a, n)
            mu = a * math.sqrt(n)
            quad, _ = integrate.quad(
                lambda t: 0.5
                * abs(math.exp(-0.5 * (t - mu) ** 2) - math.exp(-0.5 * (t + mu) ** 2))
                / math.sqrt(2.0 * math.pi),
                -np.inf,
                np.inf,
                epsabs=1e-10,
                limit=200,
            )
            worst = max(worst, abs(closed - quad))
    rep.add_metric("tv_closed_form_worst_error", worst)
    rep.check_bound("tv_closed_form_worst_error", 1e-6, "at-most", 0.0)

    risks = gaussian_testing_risks(cfg.a, 4, cfg.reps, seed.stream(50))
    rep.add_metric("full_risk", risks.full_risk, risks.full_risk_se)
    rep.add_metric("rank_risk", risks.rank_risk, risks.rank_risk_se)
    rep.check_within("full_risk", risks.closed_form_full_risk, 3.0)
    rep.check_within("rank_risk", 0.5, 3.0)
    rep.add_metric("deficiency_bound", deficiency_lower_bound(cfg.a, 4))
    rep.check_bound("deficiency_bound", 0.0, "exceeds", 0.0)

    anc = rank_ancillarity_check((-2.0, 0.0, 2.0), 3, max(cfg.reps, 6000), seed.stream(51))
    rep.add_metric("ancillarity_p_value", anc.p_value)
    rep.check_bound("ancillarity_p_value", 0.001, "at-least", 0.0)

    mm = rank_minimax_location(2.0, 25, max(cfg.reps, 10_000), seed.stream(52))
    rep.add_metric("rank_only_bound", mm.rank_only_lower_bound)
    rep.add_metric("full_data_risk", mm.full_data_risk)
    rep.add_metric("mean_estimator_risk", mm.mc_mean_risk, mm.mc_mean_risk_se)
    rep.check_within("rank_only_bound", 4.0)
    rep.check_within("full_data_risk", 0.04)
    rep.check_within("mean_estimator_risk", 0.04, 3.0)
    return rep


def run_ppi(cfg: RunConfig) -> ExperimentReport:
    """Rectified-slope law, information ordering, ridge non-extensionality."""
    seed = SeedSpec(cfg.seed, stream_id=6)
    rep = ExperimentReport(
        "ppi",
        {"tau": cfg.tau, "sigma": cfg.sigma, "n": 100, "reps": cfg.reps},
        seed,
        __version__,
    )
    sim = ppi_slope_simulation(1.0, cfg.tau, cfg.sigma, 100, max(cfg.reps, 10_000), seed.stream(60))
    rep.add_metric("slope_mean", sim.mean, sim.mean_se)
    rep.add_metric("slope_variance", sim.variance, sim.variance_se)
    rep.check_within("slope_mean", 1.0, 3.0)
    rep.check_bound("slope_variance", 1.05 * sim.target_variance, "at-most", 0.0,
                    name="slope_variance_upper")
    rep.check_bound("slope_variance", 0.95 * sim.target_variance, "at-least", 0.0,
                    name="slope_variance_lower")

    i_ppi, i_full, inferior = information_compare(cfg.tau, cfg.sigma, 100, 10_000)
    rep.add_metric("information_ppi", i_ppi)
    rep.add_metric("information_full", i_full)
    rep.add_metric("information_inferior", 1.0 if inferior else 0.0)
    rep.check_within("information_ppi", 1.0 / cfg.tau**2 + 100 / cfg.sigma**2)
    rep.check_within("information_full", 10_000 / cfg.sigma**2)
    rep.check_within("information_inferior", 1.0 if i_ppi < i_full else 0.0)

    rep.add_metric("ridge_slope_wide_design", ridge_population_slope(4.0, 1.0, 1.0))
    rep.add_metric("ridge_slope_narrow_design", ridge_population_slope(1.0, 1.0, 1.0))
    rep.check_within("ridge_slope_wide_design", 0.8)
    rep.check_within("ridge_slope_narrow_design", 0.5)

    rng = seed.stream(61).rng()
    x = rng.standard_normal(max(cfg.reps, 10_000))
    y = x + cfg.sigma * rng.standard_normal(x.size)
    sq = (y - 0.5 * x) ** 2
    rep.add_metric("residual_scale_mc", float(sq.mean()),
                   float(sq.std(ddof=1) / math.sqrt(sq.size)))
    target = residual_scale_expectation(1.0, 0.5, cfg.sigma, 1.0)
    rep.check_bound("residual_scale_mc", 1.02 * target, "at-most", 0.0,
                    name="residual_scale_upper")
    rep.check_bound("residual_scale_mc", 0.98 * target, "at-least", 0.0,
                    name="residual_scale_lower")

    two = two_pipeline_experiment(lambda x: 2.0 * x, cfg.sigma, max(cfg.reps, 2000), seed.stream(62))
    rep.add_metric("pipeline_var_diff", two.var_diff, two.var_diff_se)
    rep.check_within("pipeline_var_diff", 1.0 / 3.0, 3.0)
    rep.add_metric("pipeline_qhat_gap", two.qhat_b - two.qhat_a)
    rep.check_bound("pipeline_qhat_gap", 0.0, "at-least", 0.0)
    return rep


def run_kernel_distance(cfg: RunConfig) -> ExperimentReport:
    """Identity and separation behavior of the kernel metric."""
    seed = SeedSpec(cfg.seed, stream_id=7)
    rep = ExperimentReport(
        "kernel_distance", {"n": cfg.n, "mc_size": 2000}, seed, __version__
    )
    metric_cfg = KernelMetricConfig(mc_size=2000)
    bridge = hill_bridge_family()
    conj = conjugate_family(0.0, 1.0, 1.0)
    d_self, _ = kernel_distance(bridge, bridge, cfg.n, metric_cfg, seed.stream(70))
    rep.add_metric("distance_self", d_self)
    rep.check_within("distance_self", 0.0)
    d, se = kernel_distance(bridge, conj, cfg.n, metric_cfg, seed.stream(70))
    rep.add_metric("distance_bridge_vs_conjugate", d, se)
    rep.check_bound("distance_bridge_vs_conjugate", 0.0, "exceeds", 5.0)
    return rep


_RUNNERS = {
    "coverage": run_coverage,
    "ranks": run_ranks,
    "extensionality": run_extensionality,
    "cqr-transport": run_cqr_transport,
    "deficiency": run_deficiency,
    "ppi": run_ppi,
    "kernel-distance": run_kernel_distance,
}


def run(cfg: RunConfig) -> int:
    """Execute the configured experiments; return the process exit code."""
    names = list(_RUNNERS) if cfg.subcommand == "all" else [cfg.subcommand]
    reports = []
    for name in names:
        reports.append(_RUNNERS[name](cfg))
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        for rep in reports:
            base = os.path.join(cfg.out_dir, rep.experiment_id)
            if cfg.fmt in ("csv", "both"):
                emit_csv(rep, base + ".csv")
            if cfg.fmt in ("json", "both"):
                emit_json(rep, base + ".json")
    except OSError as exc:
        print(f"error: cannot write outputs under {cfg.out_dir!r}: {exc}", file=sys.stderr)
        return 3
    failed = [c for rep in reports for c in rep.checks if not c.passed]
    for rep in reports:
        status = "ok" if rep.all_passed else "FAIL"
        print(f"{rep.experiment_id}: {len(rep.checks)} checks, {status}")
    if failed:
        for c in failed:
            print(f"  failed: {c.name} (target {c.target}, mode {c.mode})", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coherence-bench",
        description="Seeded diagnostics for rank-calibrated predictive inference.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment suite")
        p.add_argument("--alpha", type=float, default=0.1)
        p.add_argument("--reps", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("csv", "json", "both"), default="csv")
        p.add_argument("--n-cal", type=int, default=99)
        p.add_argument("--m", type=int, default=400)
        p.add_argument("--a", type=float, default=1.0)
        p.add_argument("--n", type=int, default=5)
        p.add_argument("--tau", type=float, default=0.1)
        p.add_argument("--sigma", type=float, default=1.0)
        p.add_argument("--grid-size", type=int, default=2001)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out or os.environ.get(OUT_DIR_ENV) or "bench-out"
    try:
        cfg = RunConfig(
            subcommand=args.subcommand,
            alpha=args.alpha,
            reps=args.reps,
            seed=args.seed,
            out_dir=out_dir,
            fmt=args.format,
            n_cal=args.n_cal,
            m=args.m,
            a=args.a,
            n=args.n,
            tau=args.tau,
            sigma=args.sigma,
            grid_size=args.grid_size,
        )
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
