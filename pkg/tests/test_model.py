import numpy as np
import pytest
from scipy.special import expit

import reference
from helpers import make_scenario
from nudge_iv import (
    ConfounderLaw,
    DegenerateConfounder,
    EmptyPanel,
    RangeViolation,
    RelevanceViolation,
    SpecValidationError,
    ThresholdLaw,
    compliance_distribution,
    compliance_type,
    observe,
    potential_treatment_prob,
    simulate_panel,
)
from nudge_iv.model import CT_AT, CT_CO, CT_DE, CT_NT


# ---------------------------------------------------------------------------
# types and validation
# ---------------------------------------------------------------------------


def test_threshold_law_normalizes_degenerate_coupling():
    law = ThresholdLaw("degenerate_one", coupling="independent")
    assert law.coupling == "common"


def test_threshold_law_rejects_unknown_kind():
    with pytest.raises(SpecValidationError):
        ThresholdLaw("gumbel")


def test_monotone_fixture_is_valid(s1):
    assert s1.glim.threshold.kind == "degenerate_one"
    assert s1.glim.propensity.p(1, "all") == 0.6


def test_uniform_threshold_out_of_range_is_rejected():
    with pytest.raises(RangeViolation):
        make_scenario(kind="uniform01", p0=0.2, p1=0.9,
                      confounder=ConfounderLaw.uniform(0.0, 0.5))


def test_equal_propensities_violate_relevance():
    with pytest.raises(RelevanceViolation):
        make_scenario(kind="logistic01", p0=0.5, p1=0.5)


def test_empty_discrete_support_is_degenerate():
    with pytest.raises(DegenerateConfounder):
        make_scenario(confounder=ConfounderLaw.discrete([]))


def test_discrete_probs_must_sum_to_one():
    with pytest.raises(SpecValidationError):
        make_scenario(confounder=ConfounderLaw.discrete([(0.0, 0.5), (1.0, 0.4)]))


def test_monotone_with_no_nudgeable_mass_is_irrelevant():
    # complier interval [0.4, 0.7) misses the confounder support entirely
    with pytest.raises(RelevanceViolation):
        make_scenario(kind="degenerate_one", p0=0.3, p1=0.6,
                      confounder=ConfounderLaw.uniform(0.0, 0.2),
                      noise_sd=0.0)


def test_binary_mode_requires_zero_noise():
    with pytest.raises(SpecValidationError):
        make_scenario(m0=(0.3,), m1=(0.6,), noise_sd=0.5, binary=True)


def test_binary_mode_means_must_stay_in_unit_interval():
    with pytest.raises(RangeViolation):
        make_scenario(m0=(0.5, 1.0), m1=(0.6,), noise_sd=0.0, binary=True)


def test_assign_prob_must_be_interior():
    with pytest.raises(SpecValidationError):
        make_scenario(assign=1.0)


def test_multiplicative_negative_link_value_rejected():
    with pytest.raises(RangeViolation):
        make_scenario(kind="uniform01", link="multiplicative", p0=0.4, p1=0.8,
                      confounder=ConfounderLaw.uniform(-0.5, 0.5))


# ---------------------------------------------------------------------------
# potential treatment probabilities
# ---------------------------------------------------------------------------


def test_logistic_selection_probability():
    scn = make_scenario(kind="logistic01", p0=0.0, p1=1.0)
    assert potential_treatment_prob(scn, 1, 0.0, "all") == pytest.approx(
        reference.EXPIT_1, abs=1e-15)


def test_degenerate_selection_is_an_indicator():
    scn = make_scenario(kind="degenerate_one", p0=0.3, p1=0.6,
                        confounder=ConfounderLaw.uniform(0.0, 1.0))
    assert potential_treatment_prob(scn, 1, 0.5, "all") == 1.0  # 1.1 >= 1
    assert potential_treatment_prob(scn, 1, 0.3, "all") == 0.0


def test_uniform_threshold_selection_is_the_link_value():
    scn = make_scenario(kind="uniform01", p0=0.2, p1=0.5,
                        confounder=ConfounderLaw.uniform(0.0, 0.5))
    assert potential_treatment_prob(scn, 0, 0.3, "all") == pytest.approx(0.5)


def test_selection_prob_vectorizes():
    scn = make_scenario(kind="logistic01", p0=0.0, p1=1.0)
    u = np.array([-1.0, 0.0, 1.0])
    out = potential_treatment_prob(scn, 1, u, "all")
    assert out == pytest.approx(expit(1.0 + u))


# ---------------------------------------------------------------------------
# compliance distribution
# ---------------------------------------------------------------------------


def test_logistic_independent_compliance_at_zero():
    scn = make_scenario(kind="logistic01", p0=0.0, p1=1.0)
    c = compliance_distribution(scn, 0.0, "all")
    assert c[CT_CO] == pytest.approx(reference.S2["pco_u0"], abs=1e-15)
    assert c[CT_DE] == pytest.approx(reference.S2["pde_u0"], abs=1e-15)


def test_monotone_has_no_defiers(s1):
    for u in (0.0, 0.25, 0.5, 0.75, 1.0):
        c = compliance_distribution(s1, u, "all")
        assert c[CT_DE] == 0.0


def test_common_uniform_coupling_is_an_interval_length():
    scn = make_scenario(kind="uniform01", coupling="common", p0=0.2, p1=0.5,
                        confounder=ConfounderLaw.uniform(0.0, 0.5))
    c = compliance_distribution(scn, 0.1, "all")
    assert c[CT_CO] == pytest.approx(0.3, abs=1e-15)
    assert c[CT_DE] == 0.0


def test_compliance_properties_on_random_specs():
    rng = np.random.default_rng(515)
    for _ in range(40):
        kind = rng.choice(["uniform01", "logistic01", "degenerate_one"])
        coupling = rng.choice(["independent", "common"])
        if kind == "logistic01":
            p0, p1 = rng.uniform(-2, 2, 2)
            conf = ConfounderLaw.discrete(
                [(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)])
        elif kind == "uniform01":
            p0, p1 = rng.uniform(0.1, 0.45, 2)
            conf = ConfounderLaw.uniform(0.0, 0.5)
        else:
            p0, p1 = sorted(rng.uniform(0.1, 0.9, 2))
            conf = ConfounderLaw.uniform(0.0, 1.0)
        if abs(p1 - p0) < 0.05:
            continue
        try:
            scn = make_scenario(kind=kind, coupling=coupling, p0=p0, p1=p1,
                                confounder=conf)
        except (RelevanceViolation, RangeViolation):
            continue
        grid = (conf.atoms()[0] if conf.is_discrete
                else np.linspace(*conf.interval(), 17))
        c = compliance_distribution(scn, grid, "all")
        assert np.all(c >= -1e-15) and np.all(c <= 1 + 1e-15)
        assert np.allclose(c.sum(axis=-1), 1.0, atol=1e-12)
        s1v = np.asarray(potential_treatment_prob(scn, 1, grid, "all"))
        s0v = np.asarray(potential_treatment_prob(scn, 0, grid, "all"))
        assert np.allclose(c[..., CT_AT] + c[..., CT_CO], s1v, atol=1e-12)
        assert np.allclose(c[..., CT_AT] + c[..., CT_DE], s0v, atol=1e-12)


def test_logistic_independent_complier_share_is_constant_in_u():
    rng = np.random.default_rng(99)
    for _ in range(10):
        p0, p1 = rng.uniform(-2, 2, 2)
        if abs(p1 - p0) < 0.1:
            continue
        scn = make_scenario(kind="logistic01", p0=p0, p1=p1)
        for u in (-1.0, 1.0):
            c = compliance_distribution(scn, u, "all")
            pi = c[CT_CO] / (c[CT_CO] + c[CT_DE])
            assert pi == pytest.approx(expit(p1 - p0), abs=1e-12)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def test_simulate_rejects_empty_panel(s1):
    with pytest.raises(EmptyPanel):
        simulate_panel(s1, 0, seed=7)


def test_single_row_panel_is_structurally_consistent(s2):
    panel = simulate_panel(s2, 1, seed=7)
    assert len(panel) == 1
    assert panel.ctype[0] == compliance_type(panel.a0, panel.a1)[0]
    assert panel.nudge[0] == int(panel.a0[0] != panel.a1[0])


def test_simulation_is_deterministic(s2):
    p1 = simulate_panel(s2, 500, seed=123)
    p2 = simulate_panel(s2, 500, seed=123)
    for col in ("u", "z", "a0", "a1", "y0", "y1"):
        assert np.array_equal(getattr(p1, col), getattr(p2, col))
    assert not np.array_equal(p1.u, simulate_panel(s2, 500, seed=124).u)


def test_monotone_panel_has_exactly_zero_defiers(s1):
    panel = simulate_panel(s1, 100_000, seed=31)
    assert int((panel.ctype == "de").sum()) == 0


def test_compliance_frequencies_match_the_distribution(s2):
    panel = simulate_panel(s2, 100_000, seed=11)
    for u in (-1.0, 1.0):
        cell = panel.u == u
        n_u = int(cell.sum())
        c = compliance_distribution(s2, u, "all")
        for code, name in ((CT_NT, "nt"), (CT_AT, "at"), (CT_DE, "de"),
                           (CT_CO, "co")):
            p = c[code]
            freq = float((panel.ctype[cell] == name).mean())
            se = np.sqrt(p * (1 - p) / n_u)
            assert abs(freq - p) < 4 * se, (u, name, freq, p)


def test_panel_ctype_matches_potential_treatments(s3):
    panel = simulate_panel(s3, 20_000, seed=5)
    assert np.array_equal(panel.ctype, compliance_type(panel.a0, panel.a1))
    assert np.array_equal(panel.nudge, (panel.a0 != panel.a1).astype(np.int8))


# ---------------------------------------------------------------------------
# observation
# ---------------------------------------------------------------------------


def test_observe_consistency_examples(s2):
    panel = simulate_panel(s2, 4, seed=1)
    # force two instructive rows: a complier assigned z=1, a defier at z=0
    object.__setattr__(panel, "z", np.array([1, 0, 1, 0], dtype=np.int8))
    object.__setattr__(panel, "a0", np.array([0, 1, 0, 0], dtype=np.int8))
    object.__setattr__(panel, "a1", np.array([1, 0, 0, 0], dtype=np.int8))
    object.__setattr__(panel, "y0", np.array([2.0, 2.0, 3.0, 4.0]))
    object.__setattr__(panel, "y1", np.array([5.0, 5.0, 6.0, 7.0]))
    data = observe(panel)
    assert data.a[0] == 1 and data.y[0] == 5.0
    assert data.a[1] == 1 and data.y[1] == 5.0  # defier takes treatment at z=0
    assert data.a[2] == 0 and data.y[2] == 3.0
    assert data.a[3] == 0 and data.y[3] == 4.0


def test_observe_identities_hold_on_every_row(s5):
    panel = simulate_panel(s5, 50_000, seed=8)
    data = observe(panel)
    a_latent = np.where(panel.z == 1, panel.a1, panel.a0)
    y_latent = np.where(a_latent == 1, panel.y1, panel.y0)
    assert np.array_equal(data.a, a_latent)
    assert np.array_equal(data.y, y_latent)
    assert np.array_equal(data.covariates["l"], panel.l)


def test_observe_rejects_empty(s1):
    panel = simulate_panel(s1, 2, seed=3)
    empty = object.__new__(type(panel))
    for col in ("u", "l", "z", "a0", "a1", "y0", "y1", "ctype", "nudge"):
        object.__setattr__(empty, col, getattr(panel, col)[:0])
    with pytest.raises(EmptyPanel):
        observe(empty)
