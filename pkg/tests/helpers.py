"""Shared construction helpers for the test suite."""

from __future__ import annotations

import numpy as np

from nudge_iv import (
    ConfounderLaw,
    GlimSpec,
    InstrumentPropensity,
    ObservedDataset,
    OutcomeSpec,
    ScenarioSpec,
    ThresholdLaw,
    validate_spec,
)


def make_scenario(kind="logistic01", coupling="independent", link="additive",
                  p0=0.0, p1=1.0, confounder=None, m0=(0.0, 1.0),
                  m1=(1.0, 2.0), noise_sd=0.5, assign=0.5,
                  covariate_law=(("all", 1.0),), binary=False, name="test",
                  validate=True):
    if confounder is None:
        confounder = ConfounderLaw.discrete([(-1.0, 0.5), (1.0, 0.5)])
    spec = ScenarioSpec(
        name=name,
        glim=GlimSpec(
            threshold=ThresholdLaw(kind=kind, coupling=coupling),
            link=link,
            propensity=InstrumentPropensity(p0=p0, p1=p1, assign_prob=assign),
            confounder=confounder,
            covariate_law=covariate_law),
        outcome=OutcomeSpec(m0=m0, m1=m1, noise_sd=noise_sd,
                            binary_mode=binary))
    return validate_spec(spec) if validate else spec


def make_dataset(z, a, y, l=None) -> ObservedDataset:
    covs = {} if l is None else {"l": np.asarray(l)}
    return ObservedDataset(z=np.asarray(z), a=np.asarray(a),
                           y=np.asarray(y, dtype=float), covariates=covs)


def random_dataset(rng, n, with_covariate=False, min_first_stage=0.05):
    """Random small dataset whose (per-stratum) first stages are bounded away
    from zero; redraws until valid."""
    while True:
        z = rng.integers(0, 2, size=n)
        a = rng.integers(0, 2, size=n)
        y = np.round(rng.normal(0, 1, size=n), 3)
        l = rng.choice(["p", "q"], size=n) if with_covariate else None
        if z.sum() in (0, n):
            continue
        groups = [np.ones(n, bool)] if l is None else [l == "p", l == "q"]
        ok = True
        for g in groups:
            z1 = g & (z == 1)
            z0 = g & (z == 0)
            if z1.sum() == 0 or z0.sum() == 0:
                ok = False
                break
            den = a[z1].mean() - a[z0].mean()
            if abs(den) < min_first_stage:
                ok = False
                break
        if not ok:
            continue
        zz1 = z == 1
        den = a[zz1].mean() - a[~zz1].mean()
        if abs(den) < min_first_stage:
            continue
        return make_dataset(z, a, y, l)
