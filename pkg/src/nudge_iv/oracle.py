"""Exact population values of causal targets and identifying-condition
diagnostics, computed directly from a validated scenario.

Expectations over the confounder are exact sums for finite-support laws and
segmented 256-node Gauss-Legendre quadrature for uniform laws. The
integration interval is split at every point where an integrand can jump or
kink (degenerate-threshold crossings, clip boundaries of uniform thresholds,
polynomial roots of noise-free indicator events), so each segment sees a
smooth integrand and the fixed rule is accurate far below the 1e-9
tolerances used in tests.

Everything here is a pure function of immutable inputs and safe to call
from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SpecValidationError, UndefinedTarget, ZeroDenominator
from .functionals import FunctionalSpec, bernoulli_expectation, gaussian_expectation
from .model import ValidatedScenario, compliance_distribution, potential_treatment_prob

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)

_DEN_TOL = 1e-12
SUBGROUPS = ("population", "treated", "compliers", "nudged")
TARGET_KINDS = ("late", "nate", "ate", "att", "mean", "quantile")

#: 1-indexed positions in the compliance vector (nt, at, de, co)
_AT, _DE, _CO = 1, 2, 3


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CausalTarget:
    """A scalar causal quantity.

    kind:
        "late"  - mean effect among compliers
        "nate"  - mean effect among nudge-able units
        "ate"   - population mean effect
        "att"   - mean effect among the treated
        "mean"  - counterfactual mean E[Y(arm) | subgroup]
        "quantile" - q-quantile of Y(arm) within subgroup
    subgroup applies to "mean"/"quantile" only; v restricts to one covariate
    stratum (None = marginal).
    """

    kind: str
    arm: int | None = None
    q: float | None = None
    subgroup: str = "nudged"
    v: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind in ("mean", "quantile") and self.arm not in (0, 1):
            raise ValueError(f"target {self.kind!r} requires arm 0 or 1")
        if self.kind == "quantile":
            if self.q is None or not (0.0 < self.q < 1.0):
                raise ValueError("quantile target requires q in (0, 1)")
        if self.subgroup not in SUBGROUPS:
            raise ValueError(f"unknown subgroup {self.subgroup!r}")

    @classmethod
    def late(cls, v: str | None = None) -> "CausalTarget":
        return cls("late", v=v)

    @classmethod
    def nate(cls, v: str | None = None) -> "CausalTarget":
        return cls("nate", v=v)

    @classmethod
    def ate(cls, v: str | None = None) -> "CausalTarget":
        return cls("ate", v=v)

    @classmethod
    def att(cls, v: str | None = None) -> "CausalTarget":
        return cls("att", v=v)

    @classmethod
    def mean(cls, arm: int, subgroup: str = "nudged",
             v: str | None = None) -> "CausalTarget":
        return cls("mean", arm=arm, subgroup=subgroup, v=v)

    @classmethod
    def quantile(cls, arm: int, q: float, subgroup: str = "nudged",
                 v: str | None = None) -> "CausalTarget":
        return cls("quantile", arm=arm, q=q, subgroup=subgroup, v=v)


@dataclass(frozen=True)
class ConditionReport:
    """Identifying-condition diagnostics for one conditioning level."""

    null_cov: float
    bcs_max_dev: float
    relevance_ok: bool
    nudge_share: float
    complier_share: float
    defier_share: float
    per_stratum: dict[str, "ConditionReport"] | None = None


# ---------------------------------------------------------------------------
# integration core
# ---------------------------------------------------------------------------


def _threshold_breaks(scn: ValidatedScenario, label: str) -> list[float]:
    """u-values where selection probabilities can jump or kink."""
    glim = scn.glim
    breaks: list[float] = []
    for z in (0, 1):
        p = glim.propensity.p(z, label)
        if glim.link == "additive":
            breaks.extend((1.0 - p, -p))
        else:
            breaks.append(0.0)
            if p != 0.0:
                breaks.append(1.0 / p)
    return breaks


def _poly_roots_in(coeffs: Sequence[float], offset: float,
                   lo: float, hi: float) -> list[float]:
    """Real roots of poly(u) - offset strictly inside (lo, hi)."""
    cc = np.asarray(coeffs, dtype=float).copy()
    cc[0] -= offset
    cc = np.trim_zeros(cc, "b")
    if cc.size <= 1:
        return []
    roots = np.polynomial.polynomial.polyroots(cc)
    out = []
    for r in roots:
        if abs(r.imag) < 1e-10 and lo < r.real < hi:
            out.append(float(r.real))
    return out


def _confounder_mean(scn: ValidatedScenario, label: str,
                     fn: Callable[[np.ndarray], np.ndarray],
                     extra_breaks: Sequence[float] = ()) -> float:
    """E[fn(U)] within one covariate stratum."""
    law = scn.glim.confounder
    if law.is_discrete:
        values, probs = law.atoms()
        return float(np.sum(probs * np.asarray(fn(values), dtype=float)))
    lo, hi = law.interval()
    pts = sorted({lo, hi,
                  *(b for b in _threshold_breaks(scn, label) if lo < b < hi),
                  *(b for b in extra_breaks if lo < b < hi)})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        x = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.sum(_GL_WEIGHTS * np.asarray(fn(x))))
    return total / (hi - lo)


def _strata_in_scope(scn: ValidatedScenario,
                     v: str | None) -> tuple[tuple[str, float], ...]:
    law = scn.strata()
    if v is None:
        return law
    v = str(v)
    for lab, _ in law:
        if lab == v:
            return ((lab, 1.0),)
    raise UndefinedTarget(f"no covariate stratum {v!r} in scenario {scn.name!r}")


def _mixture(scn: ValidatedScenario, v: str | None,
             fn: Callable[[np.ndarray, str], np.ndarray],
             breaks_for: Callable[[str], Sequence[float]] | None = None) -> float:
    """E[fn(U, L)] over the (confounder, covariate) law, restricted to v."""
    total = 0.0
    for label, prob in _strata_in_scope(scn, v):
        extra = breaks_for(label) if breaks_for is not None else ()
        total += prob * _confounder_mean(
            scn, label, lambda u, lab=label: fn(u, lab), extra)
    return total


# ---------------------------------------------------------------------------
# per-point building blocks
# ---------------------------------------------------------------------------


def _s(scn, z, u, label):
    return np.asarray(potential_treatment_prob(scn, z, u, label), dtype=float)


def _delta(scn, u, label):
    return (np.asarray(scn.outcome.mean(1, u, label), dtype=float)
            - np.asarray(scn.outcome.mean(0, u, label), dtype=float))


def _treated_prob(scn, u, label):
    assign = scn.glim.propensity.assignment(label)
    return assign * _s(scn, 1, u, label) + (1.0 - assign) * _s(scn, 0, u, label)


def _subgroup_weight(scn, u, label, subgroup: str):
    if subgroup == "population":
        return np.ones_like(np.asarray(u, dtype=float))
    if subgroup == "treated":
        return _treated_prob(scn, u, label)
    comp = compliance_distribution(scn, u, label)
    if subgroup == "compliers":
        return comp[..., _CO]
    return comp[..., _CO] + comp[..., _DE]  # nudged


def _functional_mean(scn, a, h: FunctionalSpec, u, label):
    """E[h(Y(a)) | U=u, L=label] under the outcome noise model."""
    m = np.asarray(scn.outcome.mean(a, u, label), dtype=float)
    if scn.outcome.binary_mode:
        return bernoulli_expectation(h, m)
    return gaussian_expectation(h, m, scn.outcome.noise_sd)


def _indicator_breaks(scn, a, h: FunctionalSpec):
    """Breakpoint factory for noise-free indicator integrands."""
    if scn.outcome.binary_mode or scn.outcome.noise_sd > 0.0:
        return None
    if h.kind != "indicator_leq":
        return None
    law = scn.glim.confounder
    if law.is_discrete:
        return None
    lo, hi = law.interval()
    mean = scn.outcome.m1 if a == 1 else scn.outcome.m0

    def breaks(label: str):
        return _poly_roots_in(mean.coefficients(label), h.c, lo, hi)

    return breaks


# ---------------------------------------------------------------------------
# exact targets
# ---------------------------------------------------------------------------


def first_stage(scn: ValidatedScenario, v: str | None = None) -> float:
    """Population first stage Pr(A(1)=1 | v) - Pr(A(0)=1 | v)."""
    return (_mixture(scn, v, lambda u, lab: _s(scn, 1, u, lab))
            - _mixture(scn, v, lambda u, lab: _s(scn, 0, u, lab)))


def _weighted_effect(scn, v, weight_fn) -> float:
    num = _mixture(scn, v, lambda u, lab: _delta(scn, u, lab) * weight_fn(u, lab))
    den = _mixture(scn, v, weight_fn)
    if abs(den) < _DEN_TOL:
        raise UndefinedTarget("conditioning event has zero probability")
    return num / den


def true_target(scn: ValidatedScenario, target: CausalTarget) -> float:
    """Exact value of a causal target under the scenario's generative law."""
    v = target.v
    if target.kind == "ate":
        return _mixture(scn, v, lambda u, lab: _delta(scn, u, lab))
    if target.kind == "late":
        return _weighted_effect(
            scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, "compliers"))
    if target.kind == "nate":
        return _weighted_effect(
            scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, "nudged"))
    if target.kind == "att":
        return _weighted_effect(
            scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, "treated"))
    if target.kind == "mean":
        a, sub = target.arm, target.subgroup
        num = _mixture(
            scn, v,
            lambda u, lab: np.asarray(scn.outcome.mean(a, u, lab), dtype=float)
            * _subgroup_weight(scn, u, lab, sub))
        den = _mixture(scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, sub))
        if abs(den) < _DEN_TOL:
            raise UndefinedTarget(
                f"subgroup {sub!r} has zero probability (v={v!r})")
        return num / den
    # quantile
    return _subgroup_quantile(scn, target.arm, target.q, target.subgroup, v)


def treated_outcome_mean(scn: ValidatedScenario, v: str | None = None) -> float:
    """E[Y | A = 1, v]; equals E[Y(1) | A = 1, v] by consistency."""
    num = _mixture(
        scn, v,
        lambda u, lab: np.asarray(scn.outcome.mean(1, u, lab), dtype=float)
        * _treated_prob(scn, u, lab))
    den = _mixture(scn, v, lambda u, lab: _treated_prob(scn, u, lab))
    if abs(den) < _DEN_TOL:
        raise UndefinedTarget("Pr(A = 1) is zero")
    return num / den


# ---------------------------------------------------------------------------
# quantiles (mixture-CDF inversion)
# ---------------------------------------------------------------------------


def _mean_range(scn, a, v) -> tuple[float, float]:
    los, his = [], []
    mean = scn.outcome.m1 if a == 1 else scn.outcome.m0
    for label, _ in _strata_in_scope(scn, v):
        law = scn.glim.confounder
        if law.is_discrete:
            grid = law.atoms()[0]
        else:
            lo, hi = law.interval()
            grid = np.linspace(lo, hi, 1025)
        m = np.asarray(mean(grid, label), dtype=float)
        los.append(float(m.min()))
        his.append(float(m.max()))
    return min(los), max(his)


def _subgroup_cdf_factory(scn, a, subgroup, v):
    """Return F(c) = Pr(Y(a) <= c | subgroup, v) plus the weight mass."""
    mass = _mixture(scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, subgroup))
    if abs(mass) < _DEN_TOL:
        raise UndefinedTarget(f"subgroup {subgroup!r} has zero probability")

    def cdf(c: float) -> float:
        h = FunctionalSpec.indicator_leq(c)
        breaks = _indicator_breaks(scn, a, h)
        num = _mixture(
            scn, v,
            lambda u, lab: _functional_mean(scn, a, h, u, lab)
            * _subgroup_weight(scn, u, lab, subgroup),
            breaks_for=breaks)
        return num / mass

    return cdf


def _bisect_cdf(cdf: Callable[[float], float], q: float,
                lo: float, hi: float, xtol: float = 1e-10) -> float:
    flo, fhi = cdf(lo) - q, cdf(hi) - q
    if flo > 0 or fhi < 0:
        raise UndefinedTarget("quantile bracket does not contain the target mass")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) - q < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _subgroup_quantile(scn, a, q, subgroup, v) -> float:
    if scn.outcome.binary_mode:
        cdf = _subgroup_cdf_factory(scn, a, subgroup, v)
        return 0.0 if cdf(0.0) >= q else 1.0
    if scn.outcome.noise_sd == 0.0 and scn.glim.confounder.is_discrete:
        # finite mixture of point masses: walk the sorted atoms
        atoms: list[tuple[float, float]] = []
        for label, prob in _strata_in_scope(scn, v):
            values, probs = scn.glim.confounder.atoms()
            w = _subgroup_weight(scn, values, label, subgroup)
            m = np.asarray(scn.outcome.mean(a, values, label), dtype=float)
            atoms.extend(zip(m.tolist(), (prob * probs * w).tolist()))
        total = sum(w for _, w in atoms)
        if total < _DEN_TOL:
            raise UndefinedTarget(f"subgroup {subgroup!r} has zero probability")
        acc = 0.0
        for value, w in sorted(atoms):
            acc += w / total
            if acc >= q - 1e-15:
                return value
        return max(v_ for v_, _ in atoms)
    cdf = _subgroup_cdf_factory(scn, a, subgroup, v)
    m_lo, m_hi = _mean_range(scn, a, v)
    margin = 10.0 * (scn.outcome.noise_sd + (m_hi - m_lo) + 1.0)
    return _bisect_cdf(cdf, q, m_lo - margin, m_hi + margin)


# ---------------------------------------------------------------------------
# identified (Wald-type) population functionals
# ---------------------------------------------------------------------------


def exact_wald(scn: ValidatedScenario, v: str | None = None) -> float:
    """Population Wald ratio at conditioning level v.

    Numerator uses the structural decomposition of the intent-to-treat
    contrast, E[(m1 - m0)(s1 - s0) | v]; denominator is the first stage.
    """
    num = _mixture(
        scn, v,
        lambda u, lab: _delta(scn, u, lab)
        * (_s(scn, 1, u, lab) - _s(scn, 0, u, lab)))
    den = first_stage(scn, v)
    if abs(den) < _DEN_TOL:
        raise ZeroDenominator(f"zero population first stage (v={v!r})")
    return num / den


def exact_arm_wald(scn: ValidatedScenario, a: int, h: FunctionalSpec,
                   v: str | None = None) -> float:
    """Population arm-specific ratio for functional h at conditioning level v:

        [E(1{A(1)=a} h(Y(1))|v) - E(1{A(0)=a} h(Y(0))|v)]
        ------------------------------------------------
              [Pr(A(1)=a|v) - Pr(A(0)=a|v)]
    """
    if a not in (0, 1):
        raise ValueError(f"arm must be 0 or 1, got {a!r}")
    sign = 1.0 if a == 1 else -1.0
    breaks = _indicator_breaks(scn, a, h)
    num = _mixture(
        scn, v,
        lambda u, lab: sign * (_s(scn, 1, u, lab) - _s(scn, 0, u, lab))
        * _functional_mean(scn, a, h, u, lab),
        breaks_for=breaks)
    den = sign * first_stage(scn, v)
    if abs(den) < _DEN_TOL:
        raise ZeroDenominator(f"zero arm-{a} population first stage (v={v!r})")
    return num / den


def identified_quantile(scn: ValidatedScenario, a: int, q: float,
                        v: str | None = None) -> float:
    """Root of the identified CDF c -> exact_arm_wald(a, 1{y<=c}) at level q."""
    m_lo, m_hi = _mean_range(scn, a, v)
    margin = 10.0 * (scn.outcome.noise_sd + (m_hi - m_lo) + 1.0)
    return _bisect_cdf(
        lambda c: exact_arm_wald(scn, a, FunctionalSpec.indicator_leq(c), v),
        q, m_lo - margin, m_hi + margin)


# ---------------------------------------------------------------------------
# identifying-condition diagnostics
# ---------------------------------------------------------------------------


def _nudge_moments(scn, v):
    """Moments of (effect, complier share) under the nudged-weighted law."""
    w = lambda u, lab: _subgroup_weight(scn, u, lab, "nudged")
    co = lambda u, lab: _subgroup_weight(scn, u, lab, "compliers")
    mass = _mixture(scn, v, w)
    if abs(mass) < _DEN_TOL:
        raise UndefinedTarget("no nudge-able mass in scope")
    e_delta = _mixture(scn, v, lambda u, lab: _delta(scn, u, lab) * w(u, lab)) / mass
    e_pi = _mixture(scn, v, co) / mass
    e_dpi = _mixture(scn, v, lambda u, lab: _delta(scn, u, lab) * co(u, lab)) / mass
    return mass, e_delta, e_pi, e_dpi


def _bcs_grid(scn, label) -> np.ndarray:
    law = scn.glim.confounder
    if law.is_discrete:
        return law.atoms()[0]
    lo, hi = law.interval()
    pts = sorted({lo, hi,
                  *(b for b in _threshold_breaks(scn, label) if lo < b < hi)})
    chunks = [np.linspace(a, b, 513)[1:-1] for a, b in zip(pts[:-1], pts[1:])]
    return np.concatenate(chunks)


def _relevance_ok(scn) -> bool:
    for label, _ in scn.strata():
        if scn.glim.threshold.kind == "degenerate_one":
            d = (_mixture(scn, label, lambda u, lab: _s(scn, 1, u, lab))
                 - _mixture(scn, label, lambda u, lab: _s(scn, 0, u, lab)))
            if abs(d) <= _DEN_TOL:
                return False
        else:
            grid = _bcs_grid(scn, label)
            diff = _s(scn, 1, grid, label) - _s(scn, 0, grid, label)
            if np.any(np.abs(diff) <= _DEN_TOL):
                return False
    return True


def _condition_report(scn, v) -> ConditionReport:
    mass, e_delta, e_pi, e_dpi = _nudge_moments(scn, v)
    null_cov = e_dpi - e_delta * e_pi

    bcs_max_dev = 0.0
    for label, _ in _strata_in_scope(scn, v):
        stratum_mass = _mixture(
            scn, label, lambda u, lab: _subgroup_weight(scn, u, lab, "nudged"))
        if stratum_mass < _DEN_TOL:
            continue
        pi_bar = _mixture(
            scn, label,
            lambda u, lab: _subgroup_weight(scn, u, lab, "compliers")) / stratum_mass
        grid = _bcs_grid(scn, label)
        comp = compliance_distribution(scn, grid, label)
        w = comp[..., _CO] + comp[..., _DE]
        valid = w > 1e-12
        if np.any(valid):
            pi = comp[..., _CO][valid] / w[valid]
            bcs_max_dev = max(bcs_max_dev, float(np.max(np.abs(pi - pi_bar))))

    co_share = _mixture(
        scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, "compliers"))
    nudge_share = _mixture(
        scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, "nudged"))
    return ConditionReport(
        null_cov=null_cov,
        bcs_max_dev=bcs_max_dev,
        relevance_ok=_relevance_ok(scn),
        nudge_share=nudge_share,
        complier_share=co_share,
        defier_share=nudge_share - co_share)


def check_conditions(scn: ValidatedScenario,
                     V: Sequence[str] = ()) -> ConditionReport:
    """Diagnostics for the identification conditions at conditioning set V.

    V = () conditions on nothing (marginal report). V = ("l",) conditions on
    the covariate: the report then carries one sub-report per stratum and its
    top-level null_cov is the stratum value largest in magnitude. bcs_max_dev
    is always the within-stratum quantity.
    """
    V = tuple(V)
    if not V:
        return _condition_report(scn, None)
    if V != ("l",):
        raise SpecValidationError(f"unknown conditioning set {V!r}; expected ('l',)")
    per = {label: _condition_report(scn, label) for label, _ in scn.strata()}
    marginal = _condition_report(scn, None)
    worst = max(per.values(), key=lambda r: abs(r.null_cov))
    return ConditionReport(
        null_cov=worst.null_cov,
        bcs_max_dev=max(r.bcs_max_dev for r in per.values()),
        relevance_ok=all(r.relevance_ok for r in per.values()),
        nudge_share=marginal.nudge_share,
        complier_share=marginal.complier_share,
        defier_share=marginal.defier_share,
        per_stratum=per)


# ---------------------------------------------------------------------------
# identification gaps and the covariance decomposition
# ---------------------------------------------------------------------------


def itt_decomposition(scn: ValidatedScenario,
                      v: str | None = None) -> dict[str, float]:
    """Exact pieces of the intent-to-treat decomposition

        ITT(v) = 2 * cov * Pr(nudged | v)
                 + nudged_effect(v) * (co_share - de_share),

    where cov is the covariance between effect heterogeneity and the
    complier share under the nudged-weighted confounder law. Returned with
    the residual, which is zero up to quadrature error whether or not the
    covariance vanishes; exposing the pieces lets covariance-violating
    scenarios be checked with exact arithmetic.
    """
    itt = _mixture(
        scn, v,
        lambda u, lab: _delta(scn, u, lab)
        * (_s(scn, 1, u, lab) - _s(scn, 0, u, lab)))
    mass, e_delta, e_pi, e_dpi = _nudge_moments(scn, v)
    cov = e_dpi - e_delta * e_pi
    nate = e_delta
    co_share = _mixture(
        scn, v, lambda u, lab: _subgroup_weight(scn, u, lab, "compliers"))
    de_share = mass - co_share
    rhs = 2.0 * cov * mass + nate * (co_share - de_share)
    return {
        "itt": itt,
        "covariance_term": cov,
        "nudge_share": mass,
        "nate": nate,
        "complier_share": co_share,
        "defier_share": de_share,
        "residual": itt - rhs,
    }


def identification_gap(scn: ValidatedScenario, target: CausalTarget) -> float:
    """|identified estimand - true target| for the matching Wald-type form.

    The identified side is the (arm-specific) population Wald functional;
    which true target it is compared against is exactly what the target
    argument says, so mismatched pairs measure identification bias rather
    than failing.
    """
    truth = true_target(scn, target)
    v = target.v
    if target.kind in ("late", "nate"):
        ident = exact_wald(scn, v)
    elif target.kind == "ate":
        ident = (exact_arm_wald(scn, 1, FunctionalSpec.identity(), v)
                 - exact_arm_wald(scn, 0, FunctionalSpec.identity(), v))
    elif target.kind == "att":
        ident = (treated_outcome_mean(scn, v)
                 - exact_arm_wald(scn, 0, FunctionalSpec.identity(), v))
    elif target.kind == "mean":
        ident = exact_arm_wald(scn, target.arm, FunctionalSpec.identity(), v)
    else:  # quantile
        ident = identified_quantile(scn, target.arm, target.q, v)
    return abs(ident - truth)
