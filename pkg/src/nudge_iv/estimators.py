"""Sample estimators for instrument-based causal contrasts.

Everything is an exact stratified plug-in: conditional means are empirical
averages within (instrument, covariate) cells, standardized over the
empirical covariate law. No smoothing or modelling, so the algebraic
identities of the population functionals (telescoping of the two arm ratios
into the Wald ratio, h = 1 giving exactly 1) hold in every finite sample.

Estimators are pure functions of the dataset; strata can be processed in
parallel and reports are assembled in stratum-label order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFirstStage,
    EmptyStratum,
    EstimationError,
    InvalidScale,
    MissingArm,
    NoSignChange,
    YGridTooLarge,
)
from .functionals import FunctionalSpec
from .model import ObservedDataset

#: below this the first stage counts as numerically zero (hard error)
FIRST_STAGE_FLOOR = 1e-8
#: below this the first stage is statistically weak (warning only)
WEAK_FIRST_STAGE = 0.01

Y_GRID_CAP = 1_000_000


@dataclass(frozen=True)
class StratumEstimate:
    point: float
    first_stage: float
    n: int


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate plus first-stage diagnostics.

    ``point``/``first_stage`` are the fully standardized values;
    ``per_stratum`` carries the per-conditioning-value results when a
    nonempty conditioning set was requested.
    """

    estimand: str
    point: float
    first_stage: float
    n: int
    per_stratum: dict[str, StratumEstimate] | None = None
    warnings: tuple[str, ...] = ()
    details: dict[str, float] | None = None


@dataclass(frozen=True)
class ShareBounds:
    complier_lo: float
    complier_hi: float
    defier_lo: float
    defier_hi: float
    nudge_lo: float
    nudge_hi: float


@dataclass(frozen=True)
class BoundsReport:
    """Compliance-share bounds per conditioning value ("marginal" for V=())."""

    by_value: dict[str, ShareBounds]
    n: int


@dataclass(frozen=True)
class FirstStageDiagnostic:
    pi1: float
    pi0: float
    denominator: float
    n: int
    n_z1: int
    n_z0: int
    weak: bool


# ---------------------------------------------------------------------------
# grouping helpers
# ---------------------------------------------------------------------------


def _factorize(data: ObservedDataset, cols: tuple[str, ...]):
    """Integer cell codes plus one label per occupied cell for the columns."""
    n = data.n
    if not cols:
        return np.zeros(n, dtype=np.int64), [()]
    uniques = []
    codes = np.zeros(n, dtype=np.int64)
    for c in cols:
        if c not in data.covariates:
            raise EstimationError(
                f"unknown covariate column {c!r}; have {data.covariate_names}")
        u, inv = np.unique(data.covariates[c], return_inverse=True)
        codes = codes * len(u) + inv
        uniques.append(u)
    occupied, codes = np.unique(codes, return_inverse=True)
    labels = []
    for code in occupied:
        parts = []
        rem = int(code)
        for u in reversed(uniques):
            rem, k = divmod(rem, len(u))
            parts.append(u[k])
        labels.append(tuple(reversed(parts)))
    return codes.astype(np.int64), labels


def _label_key(parts) -> str:
    if parts == ():
        return "marginal"
    return "|".join(str(p) for p in parts)


def _check_V(data: ObservedDataset, V) -> tuple[str, ...]:
    V = tuple(V)
    for c in V:
        if c not in data.covariates:
            raise EstimationError(
                f"unknown covariate column {c!r}; have {data.covariate_names}")
    return V


def _first_stage_guard(den: float, warnings: list[str], where: str = "") -> None:
    suffix = f" in {where}" if where else ""
    if abs(den) < FIRST_STAGE_FLOOR:
        raise DegenerateFirstStage(
            f"first stage {den!r} below {FIRST_STAGE_FLOOR}{suffix}")
    if abs(den) < WEAK_FIRST_STAGE:
        warnings.append(f"weak first stage {den:.6g}{suffix}")


def _cell_zcounts(codes, z, n_cells):
    idx = codes * 2 + z
    return np.bincount(idx, minlength=2 * n_cells).reshape(n_cells, 2)


def _cell_zsums(values, codes, z, n_cells):
    idx = codes * 2 + z
    return np.bincount(idx, weights=values,
                       minlength=2 * n_cells).reshape(n_cells, 2)


# ---------------------------------------------------------------------------
# g-formula core
# ---------------------------------------------------------------------------


def _gformula(data: ObservedDataset, V: tuple[str, ...],
              num_values: np.ndarray, den_values: np.ndarray,
              estimand: str):
    """Standardized ratio estimates: marginal plus one per V-value.

    Within every covariate cell the (z=1, z=0) difference of cell means is
    formed for both the numerator and the denominator rows; cells are then
    averaged with their empirical frequencies, over all of L for the
    marginal value and over L given V=v for the conditional ones.
    """
    lcols = data.covariate_names
    lcodes, llabels = _factorize(data, lcols)
    n_cells = len(llabels)
    counts = _cell_zcounts(lcodes, data.z, n_cells)
    for k, cnt in enumerate(counts):
        if cnt[0] == 0 or cnt[1] == 0:
            missing = 0 if cnt[0] == 0 else 1
            raise EmptyStratum(
                f"stratum {_label_key(llabels[k])!r} has no z={missing} rows")
    num_sums = _cell_zsums(num_values, lcodes, data.z, n_cells)
    den_sums = _cell_zsums(den_values, lcodes, data.z, n_cells)
    num_diff = num_sums[:, 1] / counts[:, 1] - num_sums[:, 0] / counts[:, 0]
    den_diff = den_sums[:, 1] / counts[:, 1] - den_sums[:, 0] / counts[:, 0]
    n_l = counts.sum(axis=1)

    warnings: list[str] = []
    w = n_l / data.n
    den = float(np.sum(w * den_diff))
    _first_stage_guard(den, warnings, "marginal standardization")
    point = float(np.sum(w * num_diff)) / den

    per_stratum = None
    if V:
        vcodes, vlabels = _factorize(data, V)
        rep_rows = np.unique(lcodes, return_index=True)[1]
        v_of_l = vcodes[rep_rows]
        n_v = np.bincount(vcodes, minlength=len(vlabels))
        per_stratum = {}
        for vk, vparts in enumerate(vlabels):
            mask = v_of_l == vk
            w_v = n_l[mask] / n_v[vk]
            den_v = float(np.sum(w_v * den_diff[mask]))
            _first_stage_guard(den_v, warnings, f"stratum {_label_key(vparts)!r}")
            point_v = float(np.sum(w_v * num_diff[mask])) / den_v
            per_stratum[_label_key(vparts)] = StratumEstimate(
                point=point_v, first_stage=den_v, n=int(n_v[vk]))

    return EstimateReport(
        estimand=estimand, point=point, first_stage=den, n=data.n,
        per_stratum=per_stratum, warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def wald_marginal(data: ObservedDataset) -> EstimateReport:
    """Crude Wald ratio: outcome contrast over uptake contrast across arms."""
    z1 = data.z == 1
    n1 = int(z1.sum())
    n0 = data.n - n1
    if n1 == 0 or n0 == 0:
        raise MissingArm(f"need both instrument arms, got n1={n1}, n0={n0}")
    num = float(data.y[z1].mean() - data.y[~z1].mean())
    den = float(data.a[z1].mean() - data.a[~z1].mean())
    warnings: list[str] = []
    _first_stage_guard(den, warnings)
    return EstimateReport(
        estimand="wald_marginal", point=num / den, first_stage=den,
        n=data.n, warnings=tuple(warnings))


def wald_conditional(data: ObservedDataset, V=()) -> EstimateReport:
    """Covariate-standardized Wald ratio, per value of V plus marginal."""
    V = _check_V(data, V)
    return _gformula(data, V, data.y.astype(float), data.a.astype(float),
                     estimand="wald" + (f"|{','.join(V)}" if V else ""))


def arm_wald(data: ObservedDataset, a: int, h: FunctionalSpec,
             V=()) -> EstimateReport:
    """Arm-specific standardized ratio for the functional h."""
    if a not in (0, 1):
        raise EstimationError(f"arm must be 0 or 1, got {a!r}")
    V = _check_V(data, V)
    in_arm = (data.a == a).astype(float)
    return _gformula(data, V, in_arm * h(data.y), in_arm,
                     estimand=f"arm_wald[a={a},h={h.label}]"
                     + (f"|{','.join(V)}" if V else ""))


_SCALES = ("difference", "ratio", "odds_ratio")


def _combine_on_scale(mu1: float, mu0: float, scale: str) -> float:
    if scale == "difference":
        return mu1 - mu0
    for name, mu in (("mu1", mu1), ("mu0", mu0)):
        if not (0.0 < mu < 1.0):
            raise InvalidScale(
                f"scale {scale!r} needs arm means in (0, 1); {name} = {mu!r}")
    if scale == "ratio":
        return mu1 / mu0
    return (mu1 / (1.0 - mu1)) / (mu0 / (1.0 - mu0))


def effect_contrast(data: ObservedDataset, scale: str = "difference",
                    V=()) -> EstimateReport:
    """Counterfactual-mean contrast on the requested scale."""
    if scale not in _SCALES:
        raise InvalidScale(f"scale must be one of {_SCALES}, got {scale!r}")
    V = _check_V(data, V)
    r1 = arm_wald(data, 1, FunctionalSpec.identity(), V)
    r0 = arm_wald(data, 0, FunctionalSpec.identity(), V)
    point = _combine_on_scale(r1.point, r0.point, scale)
    per_stratum = None
    if V:
        per_stratum = {}
        for key in r1.per_stratum:
            s1, s0 = r1.per_stratum[key], r0.per_stratum[key]
            per_stratum[key] = StratumEstimate(
                point=_combine_on_scale(s1.point, s0.point, scale),
                first_stage=s1.first_stage, n=s1.n)
    return EstimateReport(
        estimand=f"contrast[{scale}]" + (f"|{','.join(V)}" if V else ""),
        point=point, first_stage=r1.first_stage, n=data.n,
        per_stratum=per_stratum,
        warnings=tuple(dict.fromkeys(r1.warnings + r0.warnings)),
        details={"mu1": r1.point, "mu0": r0.point})


# ---------------------------------------------------------------------------
# quantile moment equation
# ---------------------------------------------------------------------------


def _scan_root(data: ObservedDataset, a: int, where: str,
               warnings: list[str] | None = None) -> tuple[float, float]:
    """Smallest observed y where the arm-a median moment changes sign.

    The moment at cutoff c is the arm ratio of h(y) = 1(y <= c) - 1/2; its
    numerator is piecewise constant in c with jumps only at observed y
    values, so scanning the sorted distinct outcomes finds every sign
    change. Returns (root, first_stage).
    """
    grid = np.unique(data.y)
    if grid.size > Y_GRID_CAP:
        raise YGridTooLarge(
            f"{grid.size} distinct outcome values exceed the {Y_GRID_CAP} cap")
    lcodes, llabels = _factorize(data, data.covariate_names)
    n_cells = len(llabels)
    counts = _cell_zcounts(lcodes, data.z, n_cells)
    for k, cnt in enumerate(counts):
        if cnt[0] == 0 or cnt[1] == 0:
            missing = 0 if cnt[0] == 0 else 1
            raise EmptyStratum(
                f"stratum {_label_key(llabels[k])!r} has no z={missing} rows")
    n_l = counts.sum(axis=1)
    w_l = n_l / data.n

    in_arm = data.a == a
    num = np.zeros(grid.size)
    den = 0.0
    for k in range(n_cells):
        cell = lcodes == k
        for z, sign in ((1, 1.0), (0, -1.0)):
            rows = cell & (data.z == z)
            n_cell = counts[k, z]
            ys = np.sort(data.y[rows & in_arm])
            cnt = np.searchsorted(ys, grid, side="right")
            num += w_l[k] * sign * (cnt - 0.5 * ys.size) / n_cell
            den += w_l[k] * sign * (ys.size / n_cell)
    _first_stage_guard(den, warnings if warnings is not None else [], where)

    g = num / den
    s = np.sign(g)
    candidates = list(np.nonzero(s == 0)[0])
    flips = np.nonzero(s[1:] != s[:-1])[0] + 1
    candidates.extend(flips.tolist())
    if not candidates:
        raise NoSignChange(
            f"median moment for arm {a} keeps sign {int(s[0])} over the "
            f"outcome grid ({where})")
    return float(grid[min(candidates)]), float(den)


def median_arm(data: ObservedDataset, a: int, V=()) -> EstimateReport:
    """Median of the arm-a counterfactual outcome via the moment-equation scan."""
    if a not in (0, 1):
        raise EstimationError(f"arm must be 0 or 1, got {a!r}")
    V = _check_V(data, V)
    warnings: list[str] = []
    point, den = _scan_root(data, a, "marginal standardization", warnings)
    per_stratum = None
    if V:
        vcodes, vlabels = _factorize(data, V)
        per_stratum = {}
        for vk, vparts in enumerate(vlabels):
            sub = data.take(np.nonzero(vcodes == vk)[0])
            key = _label_key(vparts)
            point_v, den_v = _scan_root(sub, a, f"stratum {key!r}", warnings)
            per_stratum[key] = StratumEstimate(
                point=point_v, first_stage=den_v, n=sub.n)
    return EstimateReport(
        estimand=f"median[a={a}]" + (f"|{','.join(V)}" if V else ""),
        point=point, first_stage=den, n=data.n, per_stratum=per_stratum,
        warnings=tuple(warnings))


def median_nte(data: ObservedDataset, V=()) -> EstimateReport:
    """Difference of the two arm-specific medians (a continuous-outcome
    quantile contrast for the nudge-able subgroup)."""
    r1 = median_arm(data, 1, V)
    r0 = median_arm(data, 0, V)
    per_stratum = None
    if r1.per_stratum is not None:
        per_stratum = {
            key: StratumEstimate(
                point=r1.per_stratum[key].point - r0.per_stratum[key].point,
                first_stage=r1.per_stratum[key].first_stage,
                n=r1.per_stratum[key].n)
            for key in r1.per_stratum}
    return EstimateReport(
        estimand="median_nte" + (f"|{','.join(V)}" if V else ""),
        point=r1.point - r0.point,
        first_stage=r1.first_stage, n=data.n, per_stratum=per_stratum,
        warnings=tuple(dict.fromkeys(r1.warnings + r0.warnings)),
        details={"median_a1": r1.point, "median_a0": r0.point})


# ---------------------------------------------------------------------------
# nonparametric share bounds and diagnostics
# ---------------------------------------------------------------------------


def _uptake_rates(data: ObservedDataset, rows=None) -> tuple[float, float]:
    """g-formula Pr(A(z)=1) standardized over L within the given rows."""
    sub = data if rows is None else data.take(rows)
    lcodes, llabels = _factorize(sub, sub.covariate_names)
    n_cells = len(llabels)
    counts = _cell_zcounts(lcodes, sub.z, n_cells)
    for k, cnt in enumerate(counts):
        if cnt[0] == 0 or cnt[1] == 0:
            missing = 0 if cnt[0] == 0 else 1
            raise EmptyStratum(
                f"stratum {_label_key(llabels[k])!r} has no z={missing} rows")
    sums = _cell_zsums(sub.a.astype(float), lcodes, sub.z, n_cells)
    w = counts.sum(axis=1) / sub.n
    pi1 = float(np.sum(w * sums[:, 1] / counts[:, 1]))
    pi0 = float(np.sum(w * sums[:, 0] / counts[:, 0]))
    return pi1, pi0


def _share_bounds(pi1: float, pi0: float) -> ShareBounds:
    co_lo = max(0.0, pi1 - pi0)
    co_hi = min(pi1, 1.0 - pi0)
    de_lo = max(0.0, pi0 - pi1)
    de_hi = min(1.0 - pi1, pi0)
    return ShareBounds(
        complier_lo=co_lo, complier_hi=co_hi,
        defier_lo=de_lo, defier_hi=de_hi,
        nudge_lo=co_lo + de_lo, nudge_hi=min(1.0, co_hi + de_hi))


def frechet_bounds(data: ObservedDataset, V=()) -> BoundsReport:
    """Sharp marginal-based bounds on complier / defier / nudge-able shares.

    Uses the standardized potential-uptake rates per conditioning value:
    the defier share lies in [max(0, pi0 - pi1), min(1 - pi1, pi0)], the
    complier share in [max(0, pi1 - pi0), min(pi1, 1 - pi0)], and the
    nudge-able share bounds add componentwise.
    """
    V = _check_V(data, V)
    by_value: dict[str, ShareBounds] = {}
    if not V:
        pi1, pi0 = _uptake_rates(data)
        by_value["marginal"] = _share_bounds(pi1, pi0)
    else:
        vcodes, vlabels = _factorize(data, V)
        for vk, vparts in enumerate(vlabels):
            rows = np.nonzero(vcodes == vk)[0]
            pi1, pi0 = _uptake_rates(data, rows)
            by_value[_label_key(vparts)] = _share_bounds(pi1, pi0)
    return BoundsReport(by_value=by_value, n=data.n)


def first_stage_diagnostics(data: ObservedDataset,
                            V=()) -> dict[str, FirstStageDiagnostic]:
    """Within-value instrument-uptake rates, flagging weak first stages.

    Never raises on empty arms: a missing arm shows up as nan rates with
    the weak flag set and the arm count at zero.
    """
    V = _check_V(data, V)
    vcodes, vlabels = _factorize(data, V)
    out: dict[str, FirstStageDiagnostic] = {}
    for vk, vparts in enumerate(vlabels):
        rows = vcodes == vk
        z1 = rows & (data.z == 1)
        z0 = rows & (data.z == 0)
        n1, n0 = int(z1.sum()), int(z0.sum())
        pi1 = float(data.a[z1].mean()) if n1 else float("nan")
        pi0 = float(data.a[z0].mean()) if n0 else float("nan")
        den = pi1 - pi0
        weak = not np.isfinite(den) or abs(den) < WEAK_FIRST_STAGE
        out[_label_key(vparts)] = FirstStageDiagnostic(
            pi1=pi1, pi0=pi0, denominator=den,
            n=int(rows.sum()), n_z1=n1, n_z0=n0, weak=bool(weak))
    return out
