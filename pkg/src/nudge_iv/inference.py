"""Nonparametric bootstrap uncertainty and Monte Carlo study driver.

Replicates and replications are embarrassingly parallel: every unit of work
draws from its own stream addressed by (seed, index), and results are
reduced in index order, so output is a pure function of the inputs and the
seed, independent of the worker count (set via NUDGE_IV_THREADS).
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rng as _rng
from .errors import EstimationError, TooManyFailures
from .estimators import (
    EstimateReport,
    arm_wald,
    effect_contrast,
    median_nte,
    wald_conditional,
    wald_marginal,
)
from .functionals import FunctionalSpec
from .model import ObservedDataset, ValidatedScenario, observe, simulate_panel
from .oracle import CausalTarget, true_target

#: replicate/replication failure share above which inference aborts
FAILURE_CAP = 0.10

ESTIMANDS = ("wald", "wald_conditional", "arm_wald", "contrast", "median_nte")


@dataclass(frozen=True)
class EstimatorSpec:
    """Named estimator plus its parameters, for bootstrap / study drivers."""

    estimand: str
    arm: int | None = None
    h: FunctionalSpec | None = None
    scale: str = "difference"
    V: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.estimand not in ESTIMANDS:
            raise ValueError(
                f"estimand must be one of {ESTIMANDS}, got {self.estimand!r}")
        if self.estimand == "arm_wald" and self.arm not in (0, 1):
            raise ValueError("arm_wald requires arm 0 or 1")
        object.__setattr__(self, "V", tuple(self.V))

    def run(self, data: ObservedDataset) -> EstimateReport:
        if self.estimand == "wald":
            return wald_marginal(data)
        if self.estimand == "wald_conditional":
            return wald_conditional(data, self.V)
        if self.estimand == "arm_wald":
            h = self.h if self.h is not None else FunctionalSpec.identity()
            return arm_wald(data, self.arm, h, self.V)
        if self.estimand == "contrast":
            return effect_contrast(data, self.scale, self.V)
        return median_nte(data, self.V)

    def point(self, data: ObservedDataset) -> float:
        return self.run(data).point


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    seed: int = 0
    ci_level: float = 0.95
    method: str = "percentile"

    def __post_init__(self) -> None:
        if self.B < 2:
            raise ValueError(f"need B >= 2 bootstrap replicates, got {self.B}")
        if not (0.0 < self.ci_level < 1.0):
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if self.method != "percentile":
            raise ValueError(f"only the percentile method is available, got {self.method!r}")


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    se: float
    ci: tuple[float, float]
    replicates: int
    failures: int


@dataclass(frozen=True)
class McStudyResult:
    replications: int
    truth: float
    bias: float
    sd: float
    rmse: float
    coverage: float
    mean_ci_width: float
    failures: int


def _map_indexed(fn, count: int, workers: int | None = None) -> list:
    """fn over range(count), results gathered in index order.

    Work units are addressed by their index, so the result is identical for
    any worker count; threads only change wall-clock time. Default is
    sequential unless NUDGE_IV_THREADS asks for more.
    """
    if workers is None:
        workers = _rng.worker_count() if "NUDGE_IV_THREADS" in os.environ else 1
    if workers <= 1 or count < 2:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(workers, count)) as pool:
        return list(pool.map(fn, range(count)))


def _percentile_ci(points: np.ndarray, level: float) -> tuple[float, float]:
    """Order-statistic percentile interval over sorted replicate points."""
    m = points.size
    alpha = 1.0 - level
    lo_idx = min(m - 1, int(math.floor(alpha / 2.0 * m)))
    hi_idx = max(0, int(math.ceil((1.0 - alpha / 2.0) * m)) - 1)
    return float(points[lo_idx]), float(points[hi_idx])


def bootstrap(data: ObservedDataset, estimator: EstimatorSpec,
              cfg: BootstrapConfig, workers: int | None = None) -> BootstrapResult:
    """Resample-with-replacement uncertainty for an estimator.

    Replicate b resamples the n rows using the stream at (cfg.seed, b).
    Replicates where the estimator fails (a resample can empty a stratum
    arm) are skipped and counted; more than 10% failures aborts.
    """
    point = estimator.point(data)  # propagate base-estimate errors as-is
    n = data.n

    def one(b: int) -> float:
        idx = _rng.stream(cfg.seed, b).integers(0, n, size=n)
        try:
            return estimator.point(data.take(idx))
        except EstimationError:
            return np.nan

    values = np.array(_map_indexed(one, cfg.B, workers))
    ok = values[~np.isnan(values)]
    failures = int(cfg.B - ok.size)
    if failures > FAILURE_CAP * cfg.B:
        raise TooManyFailures(
            f"{failures}/{cfg.B} bootstrap replicates failed")
    ok.sort()
    se = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
    ci = _percentile_ci(ok, cfg.ci_level)
    return BootstrapResult(point=point, se=se, ci=ci,
                           replicates=int(ok.size), failures=failures)


def mc_study(scn: ValidatedScenario, estimator: EstimatorSpec,
             target: CausalTarget, n: int, R: int,
             cfg: BootstrapConfig, progress: bool = True) -> McStudyResult:
    """R cycles of simulate -> observe -> estimate -> bootstrap, scored
    against the exact target value.

    Replication r derives its simulation seed from (cfg.seed, r, 0) and its
    bootstrap seed from (cfg.seed, r, 1). Failed replications (estimator or
    bootstrap error) are skipped and counted; more than 10% aborts.
    """
    truth = true_target(scn, target)
    done = 0
    step = max(1, R // 10)

    def one(r: int):
        nonlocal done
        panel = simulate_panel(scn, n, _rng.derive_seed(cfg.seed, r, 0))
        data = observe(panel)
        inner = replace(cfg, seed=_rng.derive_seed(cfg.seed, r, 1))
        try:
            res = bootstrap(data, estimator, inner, workers=1)
        except (EstimationError, TooManyFailures):
            res = None
        done += 1
        if progress and done % step == 0:
            print(f"mc-study: {done}/{R} replications", file=sys.stderr)
        return res

    results = _map_indexed(one, R)
    ok = [r for r in results if r is not None]
    failures = R - len(ok)
    if failures > FAILURE_CAP * R:
        raise TooManyFailures(f"{failures}/{R} replications failed")

    points = np.array([r.point for r in ok])
    lo = np.array([r.ci[0] for r in ok])
    hi = np.array([r.ci[1] for r in ok])
    bias = float(points.mean() - truth)
    sd = float(points.std(ddof=0))
    rmse = float(np.sqrt(np.mean((points - truth) ** 2)))
    coverage = float(np.mean((lo <= truth) & (truth <= hi)))
    return McStudyResult(
        replications=len(ok), truth=truth, bias=bias, sd=sd, rmse=rmse,
        coverage=coverage, mean_ci_width=float(np.mean(hi - lo)),
        failures=failures)
