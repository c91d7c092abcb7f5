"""Generative treatment-selection scenarios and counterfactual simulation.

A scenario couples a latent-index selection model for the two potential
treatments with an outcome model and the laws of the confounder, covariates
and instrument. Potential treatments follow

    A(z) = 1{ h(z, U) >= eps_z },   z in {0, 1},

where the link h(z, u) is additive (p(z) + u) or multiplicative (p(z) * u)
and eps_z is a random threshold drawn per instrument value. Four threshold /
link / range combinations matter in practice:

* degenerate thresholds (eps = 1) with an additive link: the classical
  monotone latent-index model, compliers only;
* additive link with independent Uniform(0,1) thresholds and h kept inside
  the unit interval;
* multiplicative link with Uniform(0,1) thresholds and h inside the unit
  interval;
* additive link with independent Logistic(0,1) thresholds, h unrestricted.

Everything downstream (exact oracles, simulation, estimation) consumes the
``ValidatedScenario`` produced by :func:`validate_spec`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import rng as _rng
from .errors import (
    DegenerateConfounder,
    EmptyPanel,
    RangeViolation,
    RelevanceViolation,
    SpecValidationError,
)

THRESHOLD_KINDS = ("degenerate_one", "uniform01", "logistic01")
COUPLINGS = ("independent", "common")
LINKS = ("additive", "multiplicative")

#: Compliance types in the order used by compliance_distribution.
CTYPES = ("nt", "at", "de", "co")
CT_NT, CT_AT, CT_DE, CT_CO = 0, 1, 2, 3

PROB_TOL = 1e-12
_RELEVANCE_TOL = 1e-12
_RANGE_TOL = 1e-9

# a0 * 2 + a1 -> compliance label
_CTYPE_BY_CODE = np.array(["nt", "co", "de", "at"])


def compliance_type(a0, a1) -> np.ndarray:
    """Map potential-treatment pairs to their compliance labels."""
    code = np.asarray(a0, dtype=np.int64) * 2 + np.asarray(a1, dtype=np.int64)
    return _CTYPE_BY_CODE[code]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdLaw:
    """Law of the random selection thresholds (eps_0, eps_1).

    ``coupling`` controls the joint law: "independent" draws eps_0 and eps_1
    separately, "common" uses a single shared draw. A degenerate threshold
    (point mass at 1) leaves no difference between the two, so it is
    normalised to "common".
    """

    kind: str
    coupling: str = "independent"

    def __post_init__(self) -> None:
        if self.kind not in THRESHOLD_KINDS:
            raise SpecValidationError(
                f"threshold.kind must be one of {THRESHOLD_KINDS}, got {self.kind!r}")
        if self.coupling not in COUPLINGS:
            raise SpecValidationError(
                f"threshold.coupling must be one of {COUPLINGS}, got {self.coupling!r}")
        if self.kind == "degenerate_one" and self.coupling != "common":
            object.__setattr__(self, "coupling", "common")


@dataclass(frozen=True)
class InstrumentPropensity:
    """Instrument-level selection offsets p(z) and the assignment probability.

    Each field is either a single number (shared by every covariate stratum)
    or a mapping from stratum label to a number.
    """

    p0: float | Mapping[str, float]
    p1: float | Mapping[str, float]
    assign_prob: float | Mapping[str, float] = 0.5

    def p(self, z: int, label: str) -> float:
        value = self.p1 if z == 1 else self.p0
        return float(value[label]) if isinstance(value, Mapping) else float(value)

    def assignment(self, label: str) -> float:
        value = self.assign_prob
        return float(value[label]) if isinstance(value, Mapping) else float(value)


@dataclass(frozen=True)
class ConfounderLaw:
    """Law of the unmeasured confounder U: finite-support or uniform."""

    kind: str
    support: tuple[tuple[float, float], ...] | None = None
    bounds: tuple[float, float] | None = None

    @classmethod
    def discrete(cls, support: Sequence[tuple[float, float]]) -> "ConfounderLaw":
        return cls("discrete",
                   support=tuple((float(v), float(p)) for v, p in support))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ConfounderLaw":
        return cls("uniform_interval", bounds=(float(lo), float(hi)))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        values = np.array([v for v, _ in self.support], dtype=float)
        probs = np.array([p for _, p in self.support], dtype=float)
        return values, probs

    def interval(self) -> tuple[float, float]:
        return self.bounds

    def validate(self) -> None:
        if self.kind == "discrete":
            if not self.support:
                raise DegenerateConfounder("discrete confounder has empty support")
            _, probs = self.atoms()
            if np.any(probs < 0):
                raise SpecValidationError("confounder probabilities must be >= 0")
            if abs(probs.sum() - 1.0) > PROB_TOL:
                raise SpecValidationError(
                    f"confounder probabilities sum to {probs.sum()!r}, expected 1")
        elif self.kind == "uniform_interval":
            if self.bounds is None:
                raise SpecValidationError("uniform confounder requires bounds")
            lo, hi = self.bounds
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise SpecValidationError(
                    f"uniform confounder bounds must satisfy lo < hi, got {self.bounds}")
        else:
            raise SpecValidationError(
                f"confounder.kind must be 'discrete' or 'uniform_interval', got {self.kind!r}")


@dataclass(frozen=True)
class PolyMean:
    """Polynomial mean function of the confounder.

    ``coeffs`` is a flat coefficient sequence (c0, c1, ...) shared by every
    stratum, or a mapping from stratum label to such a sequence; coefficient
    k multiplies u**k.
    """

    coeffs: tuple[float, ...] | Mapping[str, tuple[float, ...]]

    def __post_init__(self) -> None:
        raw = self.coeffs
        if isinstance(raw, Mapping):
            norm = {str(k): tuple(float(c) for c in v) for k, v in raw.items()}
        else:
            norm = tuple(float(c) for c in raw)
        object.__setattr__(self, "coeffs", norm)

    def coefficients(self, label: str) -> tuple[float, ...]:
        if isinstance(self.coeffs, Mapping):
            try:
                return self.coeffs[label]
            except KeyError:
                raise SpecValidationError(
                    f"mean polynomial has no coefficients for stratum {label!r}") from None
        return self.coeffs

    def __call__(self, u, label: str):
        c = self.coefficients(label)
        return np.polynomial.polynomial.polyval(np.asarray(u, dtype=float), c)


def as_poly_mean(spec) -> PolyMean:
    """Coerce coefficient sequences / mappings / PolyMean into PolyMean."""
    if isinstance(spec, PolyMean):
        return spec
    return PolyMean(spec)


@dataclass(frozen=True)
class OutcomeSpec:
    """Potential-outcome model: mean polynomials plus Gaussian noise.

    In binary mode the mean functions give Pr(Y(a) = 1) and must stay inside
    [0, 1] on the whole confounder support; noise_sd must then be zero.
    """

    m0: PolyMean
    m1: PolyMean
    noise_sd: float = 0.0
    binary_mode: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "m0", as_poly_mean(self.m0))
        object.__setattr__(self, "m1", as_poly_mean(self.m1))
        object.__setattr__(self, "noise_sd", float(self.noise_sd))

    def mean(self, a: int, u, label: str):
        return (self.m1 if a == 1 else self.m0)(u, label)


@dataclass(frozen=True)
class GlimSpec:
    """Selection-model half of a scenario."""

    threshold: ThresholdLaw
    link: str
    propensity: InstrumentPropensity
    confounder: ConfounderLaw
    covariate_law: tuple[tuple[str, float], ...] = (("all", 1.0),)

    def __post_init__(self) -> None:
        if self.link not in LINKS:
            raise SpecValidationError(
                f"link must be one of {LINKS}, got {self.link!r}")
        object.__setattr__(
            self, "covariate_law",
            tuple((str(lab), float(p)) for lab, p in self.covariate_law))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.covariate_law)

    def link_value(self, z: int, u, label: str):
        p = self.propensity.p(z, label)
        u = np.asarray(u, dtype=float)
        return p + u if self.link == "additive" else p * u


@dataclass(frozen=True)
class ScenarioSpec:
    """Full generative description: selection model plus outcome model."""

    name: str
    glim: GlimSpec
    outcome: OutcomeSpec


@dataclass(frozen=True)
class ValidatedScenario:
    """A ScenarioSpec that passed :func:`validate_spec`.

    Pure value object; safe to share across threads.
    """

    spec: ScenarioSpec

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def glim(self) -> GlimSpec:
        return self.spec.glim

    @property
    def outcome(self) -> OutcomeSpec:
        return self.spec.outcome

    def strata(self) -> tuple[tuple[str, float], ...]:
        return self.spec.glim.covariate_law


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _probe_grid(law: ConfounderLaw, points: int = 1025) -> np.ndarray:
    """Support points used for range / relevance / binary-mode checks."""
    if law.is_discrete:
        values, _ = law.atoms()
        return values
    lo, hi = law.interval()
    return np.linspace(lo, hi, points)


def _interior_grid(law: ConfounderLaw, points: int = 1025) -> np.ndarray:
    """Like _probe_grid but without interval endpoints (measure-zero points)."""
    grid = _probe_grid(law, points)
    if law.is_discrete:
        return grid
    return grid[1:-1]


def validate_spec(spec: ScenarioSpec) -> ValidatedScenario:
    """Check every structural invariant of a scenario and tag it valid.

    Raises
    ------
    RangeViolation
        Link value leaves [0, 1] where a Uniform(0,1) threshold (or a
        multiplicative link) requires it, or a binary-mode outcome mean
        leaves [0, 1].
    RelevanceViolation
        p0 == p1 in some stratum, equal potential-treatment probabilities at
        some supported confounder point (stochastic thresholds), or a zero
        stratum-level first stage (degenerate thresholds).
    DegenerateConfounder
        Empty confounder support.
    SpecValidationError
        Any other malformed field.
    """
    glim = spec.glim
    outcome = spec.outcome

    glim.confounder.validate()

    labels = glim.labels
    if not labels:
        raise SpecValidationError("covariate_law must contain at least one stratum")
    if len(set(labels)) != len(labels):
        raise SpecValidationError("covariate_law labels must be unique")
    law_probs = np.array([p for _, p in glim.covariate_law], dtype=float)
    if np.any(law_probs <= 0):
        raise SpecValidationError("covariate_law probabilities must be > 0")
    if abs(law_probs.sum() - 1.0) > PROB_TOL:
        raise SpecValidationError(
            f"covariate_law probabilities sum to {law_probs.sum()!r}, expected 1")

    if not np.isfinite(outcome.noise_sd) or outcome.noise_sd < 0:
        raise SpecValidationError(f"noise_sd must be >= 0, got {outcome.noise_sd!r}")
    if outcome.binary_mode and outcome.noise_sd != 0:
        raise SpecValidationError("binary_mode requires noise_sd = 0")

    grid = _probe_grid(glim.confounder)
    interior = _interior_grid(glim.confounder)

    for label in labels:
        assign = glim.propensity.assignment(label)
        if not (0.0 < assign < 1.0):
            raise SpecValidationError(
                f"assign_prob must lie in (0, 1), got {assign!r} in stratum {label!r}")

        p0 = glim.propensity.p(0, label)
        p1 = glim.propensity.p(1, label)
        for z, p in ((0, p0), (1, p1)):
            if not np.isfinite(p):
                raise SpecValidationError(
                    f"p{z} must be finite, got {p!r} in stratum {label!r}")
        if abs(p1 - p0) <= _RELEVANCE_TOL:
            raise RelevanceViolation(
                f"propensity p0 == p1 == {p0!r} in stratum {label!r}")

        # range constraints: uniform thresholds need h in [0,1]; the
        # multiplicative link keeps h a probability-scale quantity always
        needs_unit_range = (glim.threshold.kind == "uniform01"
                            or glim.link == "multiplicative")
        if needs_unit_range:
            for z in (0, 1):
                h = glim.link_value(z, grid, label)
                bad = (h < -_RANGE_TOL) | (h > 1.0 + _RANGE_TOL)
                if np.any(bad):
                    u_bad = grid[bad][0]
                    raise RangeViolation(
                        f"h(z={z}, u={u_bad!r}) = {glim.link_value(z, u_bad, label)!r} "
                        f"outside [0, 1] in stratum {label!r}")

        # relevance at supported confounder points; degenerate thresholds
        # make the potential treatments deterministic in u, so only the
        # stratum-level first stage can be required there
        if glim.threshold.kind == "degenerate_one":
            diff = _stratum_uptake(spec, 1, label) - _stratum_uptake(spec, 0, label)
            if abs(diff) <= _RELEVANCE_TOL:
                raise RelevanceViolation(
                    f"zero stratum-level first stage in stratum {label!r}")
        else:
            probe = ValidatedScenario(spec)
            s0_grid = np.asarray(potential_treatment_prob(probe, 0, interior, label))
            s1_grid = np.asarray(potential_treatment_prob(probe, 1, interior, label))
            flat = np.abs(s1_grid - s0_grid) <= _RELEVANCE_TOL
            if np.any(flat):
                u_bad = interior[np.argmax(flat)]
                raise RelevanceViolation(
                    f"equal potential-treatment probabilities at u={u_bad!r} "
                    f"in stratum {label!r}")

        if outcome.binary_mode:
            for a in (0, 1):
                m = np.asarray(outcome.mean(a, grid, label))
                if np.any((m < -_RANGE_TOL) | (m > 1.0 + _RANGE_TOL)):
                    raise RangeViolation(
                        f"binary-mode mean m{a} leaves [0, 1] in stratum {label!r}")
        for a in (0, 1):
            coeffs = (outcome.m1 if a else outcome.m0).coefficients(label)
            if not all(np.isfinite(c) for c in coeffs):
                raise SpecValidationError(
                    f"m{a} coefficients must be finite in stratum {label!r}")

    return ValidatedScenario(spec)


def _stratum_uptake(spec: ScenarioSpec, z: int, label: str) -> float:
    """Pr(A(z) = 1 | L = label) for a degenerate-threshold scenario.

    Only needed at validation time; closed form because the potential
    treatment is then a step function of u.
    """
    scn = ValidatedScenario(spec)
    law = spec.glim.confounder
    if law.is_discrete:
        values, probs = law.atoms()
        return float(np.sum(probs * potential_treatment_prob(scn, z, values, label)))
    lo, hi = law.interval()
    p = spec.glim.propensity.p(z, label)
    if spec.glim.link == "additive":
        cut = 1.0 - p
        return float((hi - np.clip(cut, lo, hi)) / (hi - lo))
    # multiplicative: h = p*u >= 1
    if p == 0:
        return 0.0
    cut = 1.0 / p
    if p > 0:
        return float((hi - np.clip(cut, lo, hi)) / (hi - lo))
    return float((np.clip(cut, lo, hi) - lo) / (hi - lo))


# ---------------------------------------------------------------------------
# selection-model probabilities
# ---------------------------------------------------------------------------


def potential_treatment_prob(scn: ValidatedScenario, z: int, u, label: str):
    """Pr(A(z) = 1 | U = u, L = label) under the threshold law.

    Vectorised over u. Shapes follow numpy broadcasting; scalars in,
    scalar out.
    """
    glim = scn.glim
    h = glim.link_value(z, u, label)
    kind = glim.threshold.kind
    if kind == "degenerate_one":
        out = (h >= 1.0).astype(float)
    elif kind == "uniform01":
        out = np.clip(h, 0.0, 1.0)
    else:  # logistic01
        out = expit(h)
    return out if np.ndim(u) else float(out)


def compliance_distribution(scn: ValidatedScenario, u, label: str) -> np.ndarray:
    """Joint law of the compliance type at (u, label).

    Returns an array with last axis (nt, at, de, co) in the order of
    :data:`CTYPES`; components are in [0, 1] and sum to one.

    Under independent coupling the joint factorises into the product of the
    potential-treatment marginals. Under common coupling one shared
    threshold draw makes the potential treatments comonotone, so e.g. the
    complier mass is the positive part of F(h(1,u)) - F(h(0,u)).
    """
    s0 = np.asarray(potential_treatment_prob(scn, 0, u, label), dtype=float)
    s1 = np.asarray(potential_treatment_prob(scn, 1, u, label), dtype=float)
    if scn.glim.threshold.coupling == "independent":
        nt = (1.0 - s0) * (1.0 - s1)
        at = s0 * s1
        de = s0 * (1.0 - s1)
        co = (1.0 - s0) * s1
    else:
        at = np.minimum(s0, s1)
        nt = 1.0 - np.maximum(s0, s1)
        co = np.maximum(s1 - s0, 0.0)
        de = np.maximum(s0 - s1, 0.0)
    return np.stack([nt, at, de, co], axis=-1)


# ---------------------------------------------------------------------------
# panels and observation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CounterfactualPanel:
    """Per-unit latent table produced by :func:`simulate_panel`."""

    u: np.ndarray
    l: np.ndarray
    z: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    ctype: np.ndarray
    nudge: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.u)
        for name in ("l", "z", "a0", "a1", "y0", "y1", "ctype", "nudge"):
            if len(getattr(self, name)) != n:
                raise SpecValidationError(f"panel column {name!r} has wrong length")

    def __len__(self) -> int:
        return len(self.u)


@dataclass(frozen=True)
class ObservedDataset:
    """Observed columns only: instrument, treatment, outcome, covariates."""

    z: np.ndarray
    a: np.ndarray
    y: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=np.int8)
        a = np.asarray(self.a, dtype=np.int8)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        if z.size == 0:
            raise EmptyPanel("observed dataset is empty")
        if z.shape != a.shape or z.shape != y.shape:
            raise SpecValidationError("z, a, y must have equal length")
        if np.any((z != 0) & (z != 1)) or np.any((a != 0) & (a != 1)):
            raise SpecValidationError("z and a must be 0/1")
        if not np.all(np.isfinite(y)):
            raise SpecValidationError("y must be finite")
        covs = {str(k): np.asarray(v) for k, v in self.covariates.items()}
        for k, v in covs.items():
            if v.shape != z.shape:
                raise SpecValidationError(f"covariate {k!r} has wrong length")
        object.__setattr__(self, "covariates", covs)

    @property
    def n(self) -> int:
        return int(self.z.size)

    def __len__(self) -> int:
        return self.n

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(self.covariates)

    def take(self, idx) -> "ObservedDataset":
        """Row subset / resample by integer index array.

        Skips constructor validation: any row subset of a validated dataset
        is valid, and this sits on the hot path of resampling loops.
        """
        out = object.__new__(ObservedDataset)
        object.__setattr__(out, "z", self.z[idx])
        object.__setattr__(out, "a", self.a[idx])
        object.__setattr__(out, "y", self.y[idx])
        object.__setattr__(out, "covariates",
                           {k: v[idx] for k, v in self.covariates.items()})
        return out

    def shift_y(self, delta: float) -> "ObservedDataset":
        return ObservedDataset(z=self.z, a=self.a, y=self.y + delta,
                               covariates=dict(self.covariates))

    def scale_y(self, factor: float) -> "ObservedDataset":
        return ObservedDataset(z=self.z, a=self.a, y=self.y * factor,
                               covariates=dict(self.covariates))


def simulate_panel(scn: ValidatedScenario, n: int, seed: int) -> CounterfactualPanel:
    """Draw n i.i.d. units from the scenario.

    Deterministic given (scenario, n, seed): all randomness comes from one
    Philox stream addressed by the seed, and draws happen in a fixed order
    (stratum, confounder, thresholds, instrument, outcome noise). The output
    therefore never depends on the number of worker threads.
    """
    if n < 1:
        raise EmptyPanel(f"panel size must be >= 1, got {n}")
    glim = scn.glim
    g = _rng.stream(seed)

    labels = np.array(glim.labels)
    label_probs = np.array([p for _, p in glim.covariate_law], dtype=float)
    l_idx = g.choice(len(labels), size=n, p=label_probs)
    l = labels[l_idx]

    law = glim.confounder
    if law.is_discrete:
        values, probs = law.atoms()
        u = values[g.choice(len(values), size=n, p=probs)]
    else:
        lo, hi = law.interval()
        u = g.uniform(lo, hi, size=n)

    kind = glim.threshold.kind
    if kind == "degenerate_one":
        e0 = e1 = np.ones(n)
    elif kind == "uniform01":
        if glim.threshold.coupling == "common":
            e0 = e1 = g.random(n)
        else:
            e0 = g.random(n)
            e1 = g.random(n)
    else:  # logistic01
        if glim.threshold.coupling == "common":
            e0 = e1 = g.logistic(0.0, 1.0, n)
        else:
            e0 = g.logistic(0.0, 1.0, n)
            e1 = g.logistic(0.0, 1.0, n)

    p0 = np.array([glim.propensity.p(0, lab) for lab in labels])[l_idx]
    p1 = np.array([glim.propensity.p(1, lab) for lab in labels])[l_idx]
    if glim.link == "additive":
        h0, h1 = p0 + u, p1 + u
    else:
        h0, h1 = p0 * u, p1 * u
    a0 = (h0 >= e0).astype(np.int8)
    a1 = (h1 >= e1).astype(np.int8)

    assign = np.array([glim.propensity.assignment(lab) for lab in labels])[l_idx]
    z = (g.random(n) < assign).astype(np.int8)

    m0 = np.empty(n)
    m1 = np.empty(n)
    for k, lab in enumerate(labels):
        mask = l_idx == k
        if np.any(mask):
            m0[mask] = scn.outcome.mean(0, u[mask], lab)
            m1[mask] = scn.outcome.mean(1, u[mask], lab)
    if scn.outcome.binary_mode:
        y0 = (g.random(n) < m0).astype(float)
        y1 = (g.random(n) < m1).astype(float)
    else:
        sd = scn.outcome.noise_sd
        y0 = m0 + sd * g.standard_normal(n)
        y1 = m1 + sd * g.standard_normal(n)

    return CounterfactualPanel(
        u=u, l=l, z=z, a0=a0, a1=a1, y0=y0, y1=y1,
        ctype=compliance_type(a0, a1), nudge=(a0 != a1).astype(np.int8))


def observe(panel: CounterfactualPanel) -> ObservedDataset:
    """Collapse a latent panel to its observed columns.

    A = Z * A(1) + (1 - Z) * A(0) and Y = A * Y(1) + (1 - A) * Y(0), exactly.
    """
    if len(panel) == 0:
        raise EmptyPanel("cannot observe an empty panel")
    a = np.where(panel.z == 1, panel.a1, panel.a0).astype(np.int8)
    y = np.where(a == 1, panel.y1, panel.y0)
    return ObservedDataset(z=panel.z.copy(), a=a, y=y,
                           covariates={"l": panel.l.copy()})
