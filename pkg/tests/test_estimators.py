import numpy as np
import pytest

import reference
from helpers import make_dataset, random_dataset
from nudge_iv import (
    DegenerateFirstStage,
    EmptyStratum,
    FunctionalSpec,
    InvalidScale,
    MissingArm,
    NoSignChange,
    YGridTooLarge,
    arm_wald,
    effect_contrast,
    exact_wald,
    first_stage_diagnostics,
    frechet_bounds,
    median_arm,
    median_nte,
    observe,
    simulate_panel,
    true_target,
    wald_conditional,
    wald_marginal,
)
from nudge_iv.oracle import CausalTarget

IDENT = FunctionalSpec.identity()
ONE = FunctionalSpec.custom(lambda y: np.ones_like(y), "one")


# ---------------------------------------------------------------------------
# wald_marginal
# ---------------------------------------------------------------------------


def test_wald_is_one_when_outcome_equals_treatment():
    rng = np.random.default_rng(0)
    z = rng.integers(0, 2, 200)
    a = (rng.random(200) < 0.2 + 0.6 * z).astype(int)
    data = make_dataset(z, a, a.astype(float))
    assert wald_marginal(data).point == pytest.approx(1.0, abs=1e-14)


def test_wald_requires_both_arms():
    with pytest.raises(MissingArm):
        wald_marginal(make_dataset([1, 1, 1], [0, 1, 0], [1.0, 2.0, 3.0]))


def test_wald_degenerate_first_stage():
    # identical uptake rates in both arms
    data = make_dataset([0, 0, 1, 1], [0, 1, 0, 1], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(DegenerateFirstStage):
        wald_marginal(data)


def test_wald_weak_first_stage_warns():
    # uptake rates 0.502 vs 0.500 exactly: nonzero but weak
    z = np.repeat([1, 0], 1000)
    a = np.concatenate([np.repeat([1, 0], [502, 498]),
                        np.repeat([1, 0], [500, 500])])
    y = np.linspace(-1, 1, 2000)
    report = wald_marginal(make_dataset(z, a, y))
    assert abs(report.first_stage) == pytest.approx(0.002, abs=1e-12)
    assert any("weak first stage" in w for w in report.warnings)


def test_wald_shift_invariance_and_scale_equivariance():
    rng = np.random.default_rng(7)
    data = random_dataset(rng, 60)
    base = wald_marginal(data).point
    shifted = wald_marginal(data.shift_y(17.5)).point
    scaled = wald_marginal(data.scale_y(-3.0)).point
    assert shifted == pytest.approx(base, abs=1e-12)
    assert scaled == pytest.approx(-3.0 * base, abs=1e-12)
    # arm ratios shift by exactly the constant
    arm_base = arm_wald(data, 1, IDENT).point
    arm_shift = arm_wald(data.shift_y(17.5), 1, IDENT).point
    assert arm_shift == pytest.approx(arm_base + 17.5, abs=1e-12)


# ---------------------------------------------------------------------------
# g-formula standardization
# ---------------------------------------------------------------------------


def test_single_stratum_conditional_equals_marginal():
    rng = np.random.default_rng(3)
    data = random_dataset(rng, 80, with_covariate=False)
    crude = wald_marginal(data).point
    std = wald_conditional(data).point
    assert std == pytest.approx(crude, abs=1e-14)


def test_conditional_requires_both_arms_per_stratum():
    data = make_dataset([0, 1, 0, 0], [0, 1, 1, 0], [0.0, 1.0, 2.0, 3.0],
                        l=["p", "p", "q", "q"])
    with pytest.raises(EmptyStratum):
        wald_conditional(data, V=("l",))


def test_per_stratum_estimates_track_per_stratum_truth(s5):
    from nudge_iv import BootstrapConfig, EstimatorSpec, bootstrap

    data = observe(simulate_panel(s5, 60_000, seed=21))
    report = wald_conditional(data, V=("l",))
    assert set(report.per_stratum) == {"x", "y"}
    for label in ("x", "y"):
        truth = exact_wald(s5, v=label)
        got = report.per_stratum[label].point
        # within a stratum the standardized ratio is the crude one, so its
        # bootstrap SE comes from the stratum subset
        sub = data.take(np.nonzero(data.covariates["l"] == label)[0])
        assert wald_marginal(sub).point == pytest.approx(got, abs=1e-12)
        se = bootstrap(sub, EstimatorSpec("wald"),
                       BootstrapConfig(B=200, seed=21)).se
        assert abs(got - truth) <= 5 * se, (label, got, truth, se)


def test_marginal_standardization_differs_from_crude_when_confounded():
    # make Z depend on L strongly and L shift the outcome
    rng = np.random.default_rng(11)
    n = 20_000
    l = rng.choice(["p", "q"], n)
    pz = np.where(l == "p", 0.8, 0.2)
    z = (rng.random(n) < pz).astype(int)
    a = (rng.random(n) < 0.2 + 0.5 * z).astype(int)
    y = a * 1.0 + (l == "p") * 3.0 + rng.normal(0, 0.1, n)
    data = make_dataset(z, a, y, l=l)
    crude = wald_marginal(data).point
    std = wald_conditional(data).point
    assert abs(std - 1.0) < 0.1
    assert abs(crude - 1.0) > 0.5  # confounding leaks into the crude ratio


# ---------------------------------------------------------------------------
# arm-specific ratios
# ---------------------------------------------------------------------------


def test_arm_ratio_of_unit_functional_is_exactly_one():
    rng = np.random.default_rng(5)
    for _ in range(10):
        data = random_dataset(rng, 40)
        assert arm_wald(data, 1, ONE).point == 1.0
        assert arm_wald(data, 0, ONE).point == 1.0


def test_telescoping_identity_on_random_datasets():
    rng = np.random.default_rng(6)
    for _ in range(25):
        with_cov = bool(rng.integers(0, 2))
        data = random_dataset(rng, int(rng.integers(12, 50)), with_cov)
        lhs = arm_wald(data, 1, IDENT).point - arm_wald(data, 0, IDENT).point
        rhs = wald_conditional(data).point
        assert lhs == pytest.approx(rhs, abs=1e-12)
        if not with_cov:
            assert rhs == pytest.approx(wald_marginal(data).point, abs=1e-12)


def test_s4_arm_ratio_tracks_oracle(s4):
    data = observe(simulate_panel(s4, 50_000, seed=9))
    got = arm_wald(data, 0, IDENT).point
    assert abs(got - reference.S4["mu0_treated"]) < 0.1


# ---------------------------------------------------------------------------
# contrasts
# ---------------------------------------------------------------------------


def test_contrast_null_effect():
    z = np.array([0, 0, 1, 1] * 10)
    a = z.copy()
    y = np.full(40, 0.5)
    data = make_dataset(z, a, y)
    assert effect_contrast(data, "difference").point == pytest.approx(0.0)
    assert effect_contrast(data, "ratio").point == pytest.approx(1.0)
    assert effect_contrast(data, "odds_ratio").point == pytest.approx(1.0)


def test_contrast_rejects_ratio_scales_for_continuous_outcomes():
    rng = np.random.default_rng(8)
    data = random_dataset(rng, 50)
    with pytest.raises(InvalidScale):
        effect_contrast(data.scale_y(10.0), "odds_ratio")


def test_binary_fixture_odds_ratio_tracks_oracle(s2_binary):
    from nudge_iv import BootstrapConfig, EstimatorSpec, bootstrap

    data = observe(simulate_panel(s2_binary, 100_000, seed=17))
    mu1 = true_target(s2_binary, CausalTarget.mean(1, "nudged"))
    mu0 = true_target(s2_binary, CausalTarget.mean(0, "nudged"))
    truth = (mu1 / (1 - mu1)) / (mu0 / (1 - mu0))
    res = bootstrap(data, EstimatorSpec("contrast", scale="odds_ratio"),
                    BootstrapConfig(B=150, seed=17))
    assert abs(res.point - truth) <= 5 * res.se


# ---------------------------------------------------------------------------
# median scan
# ---------------------------------------------------------------------------


def test_constant_outcome_has_no_sign_change():
    z = np.array([0, 1] * 20)
    a = z.copy()
    data = make_dataset(z, a, np.full(40, 3.25))
    with pytest.raises(NoSignChange):
        median_arm(data, 1)


def test_median_scan_is_row_order_invariant():
    rng = np.random.default_rng(12)
    z = rng.integers(0, 2, 400)
    a = (rng.random(400) < 0.15 + 0.7 * z).astype(int)
    y = rng.normal(a * 2.0, 1.0)
    data = make_dataset(z, a, y)
    base = median_nte(data).point
    perm = rng.permutation(400)
    shuffled = data.take(perm)
    assert median_nte(shuffled).point == base


def test_median_grid_cap(monkeypatch):
    import nudge_iv.estimators as est
    monkeypatch.setattr(est, "Y_GRID_CAP", 100)
    rng = np.random.default_rng(13)
    data = random_dataset(rng, 300)
    with pytest.raises(YGridTooLarge):
        median_arm(data, 1)


def test_location_shift_median_matches_mean_effect(s2_shift):
    data = observe(simulate_panel(s2_shift, 60_000, seed=19))
    med = median_nte(data).point
    mean = wald_marginal(data).point
    assert abs(med - 1.5) < 0.1
    assert abs(med - mean) < 0.1


# ---------------------------------------------------------------------------
# bounds and diagnostics
# ---------------------------------------------------------------------------


def test_bounds_formulas_on_exact_rates():
    # pi1 = 0.7, pi0 = 0.4 exactly
    z = np.repeat([1, 0], 10)
    a = np.concatenate([np.repeat([1, 0], [7, 3]), np.repeat([1, 0], [4, 6])])
    data = make_dataset(z, a, np.zeros(20))
    b = frechet_bounds(data).by_value["marginal"]
    assert (b.complier_lo, b.complier_hi) == pytest.approx((0.3, 0.6))
    assert (b.defier_lo, b.defier_hi) == pytest.approx((0.0, 0.3))
    assert (b.nudge_lo, b.nudge_hi) == pytest.approx((0.3, 0.9))


def test_bounds_degenerate_rates_stay_valid():
    z = np.repeat([1, 0], 10)
    a = np.tile(np.repeat([1, 0], [4, 6]), 2)
    data = make_dataset(z, a, np.zeros(20))
    b = frechet_bounds(data).by_value["marginal"]
    assert b.complier_lo == 0.0 and b.defier_lo == 0.0
    assert b.complier_lo <= b.complier_hi
    assert b.defier_lo <= b.defier_hi
    assert b.nudge_lo <= b.nudge_hi


def test_monotone_bounds_put_the_share_at_the_floor(s1):
    data = observe(simulate_panel(s1, 50_000, seed=23))
    b = frechet_bounds(data).by_value["marginal"]
    assert b.complier_lo == pytest.approx(reference.S1["complier_share"], abs=0.02)


def test_first_stage_diagnostics_marginal_matches_wald():
    rng = np.random.default_rng(14)
    data = random_dataset(rng, 60)
    diag = first_stage_diagnostics(data)
    assert set(diag) == {"marginal"}
    assert diag["marginal"].denominator == pytest.approx(
        wald_marginal(data).first_stage, abs=1e-15)


def test_first_stage_diagnostics_flags_missing_arm():
    data = make_dataset([0, 1, 0, 0], [0, 1, 1, 0], [0.0, 1.0, 2.0, 3.0],
                        l=["p", "p", "q", "q"])
    diag = first_stage_diagnostics(data, V=("l",))
    assert diag["q"].n_z1 == 0
    assert diag["q"].weak
    assert np.isnan(diag["q"].denominator)


def test_first_stage_diagnostics_tracks_the_design(s1):
    data = observe(simulate_panel(s1, 40_000, seed=25))
    d = first_stage_diagnostics(data)["marginal"]
    assert d.denominator == pytest.approx(0.3, abs=0.02)
    assert not d.weak
