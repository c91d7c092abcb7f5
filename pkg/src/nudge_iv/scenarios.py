"""Reference scenarios shipped with the package.

One fixture per selection-model family, plus variants used by the test
suite:

* ``s1_monotone``        degenerate thresholds, monotone selection
* ``s2_logistic``        independent logistic thresholds (balanced
                         complier share by construction)
* ``s3_additive``        uniform thresholds, additive link
* ``s3_additive_hetero`` same selection, steeper effect heterogeneity
                         (negative control: the plain ratio recovers the
                         population mean effect, not the nudged one)
* ``s4_multiplicative``  uniform thresholds, multiplicative link
* ``s1_noise_free``      s1 without outcome noise (exact quantiles)
* ``s2_location_shift``  s2 selection with a constant additive effect
* ``s2_binary``          s2 selection with Bernoulli outcomes
* ``s5_two_strata``      stratum-specific propensities and outcome means
"""

from __future__ import annotations

import json
from importlib.resources import files

from .io import scenario_from_document
from .model import ValidatedScenario

FIXTURES = (
    "s1_monotone",
    "s2_logistic",
    "s3_additive",
    "s3_additive_hetero",
    "s4_multiplicative",
    "s1_noise_free",
    "s2_location_shift",
    "s2_binary",
    "s5_two_strata",
)


def available_fixtures() -> tuple[str, ...]:
    return FIXTURES


def fixture_text(name: str) -> str:
    """Raw JSON text of a shipped fixture."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {FIXTURES}")
    return (files("nudge_iv") / "fixtures" / f"{name}.json").read_text("utf-8")


def load_fixture(name: str) -> ValidatedScenario:
    """Load and validate a shipped fixture by name."""
    return scenario_from_document(json.loads(fixture_text(name)),
                                  source=f"fixture:{name}")
