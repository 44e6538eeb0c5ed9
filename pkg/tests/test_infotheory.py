# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from modules.common import CapabilityError, DimensionError, DomainError, StructureError
from modules.expfam import ParamMap
from modules.infotheory import (
    FiniteJoint,
    bayes_error,
    entropy,
    fano_bound,
    fano_property_run,
    joint_over_graph_and_data,
    mi_exact,
    mi_monte_carlo,
    mi_upper_bound,
    mutual_information,
    verify_fano_extension,
)
from modules.models import EnsembleSpec, FamilyModel


LN2 = math.log(2)
CPT = FamilyModel(kind="cpt", v=2, theta_min=0.15)

MI_CASES = [
    (EnsembleSpec(kind="restricted_all", m=3), 1),
    (EnsembleSpec(kind="restricted_all", m=3), 2),
    (EnsembleSpec(kind="restricted_all", m=3), 3),
    (EnsembleSpec(kind="layered_all", layers=(1, 1)), 2),
    (EnsembleSpec(kind="layered_all", layers=(2, 1)), 2),
    (EnsembleSpec(kind="layered_all", layers=(1, 2)), 2),
]


def test_entropy_and_mutual_information_basics():
    independent = FiniteJoint(np.full((2, 2), 0.25))
    assert entropy(independent, [0]) == pytest.approx(LN2)
    assert entropy(independent, [0, 1]) == pytest.approx(2 * LN2)
    assert mutual_information(independent, [0], [1]) == pytest.approx(0.0, abs=1e-12)

    copy = FiniteJoint(np.array([[0.5, 0.0], [0.0, 0.5]]))
    assert mutual_information(copy, [0], [1]) == pytest.approx(LN2)
    assert entropy(copy, [0], [1]) == pytest.approx(0.0, abs=1e-12)


def test_conditional_mutual_information_of_xor():
    mass = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            mass[a, b, a ^ b] = 0.25
    j = FiniteJoint(mass)
    assert mutual_information(j, [0], [1]) == pytest.approx(0.0, abs=1e-12)
    assert mutual_information(j, [0], [1], [2]) == pytest.approx(LN2)


@pytest.mark.parametrize(
    "mass",
    [np.array([0.6, 0.6, -0.2]), np.array([0.3, 0.3])],
    ids=["negative", "unnormalized"],
)
def test_invalid_joints(mass):
    with pytest.raises(DomainError):
        FiniteJoint(mass)


def test_overlapping_variable_sets():
    j = FiniteJoint(np.full((2, 2), 0.25))
    with pytest.raises(DimensionError):
        mutual_information(j, [0], [0, 1])
    with pytest.raises(DimensionError):
        entropy(j, [2])


def test_fano_bound():
    assert fano_bound(0.0, math.log(4)) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        fano_bound(0.1, 0.0)


def test_bayes_error_of_informative_observation():
    mass = np.zeros((1, 3, 3))
    mass[0, [0, 1, 2], [0, 1, 2]] = 1 / 3
    assert bayes_error(FiniteJoint(mass)) == pytest.approx(0.0)


def test_fano_extension_holds_on_random_models():
    run = fano_property_run(1000, seed=0)
    assert run.violations == 0
    assert run.violations_sup == 0
    assert run.min_slack >= -1e-9


def test_skewed_prior_breaks_the_extended_bound():
    px = np.full(100, 0.1 / 99)
    px[0] = 0.9
    mass = (px[:, None] * np.full(2, 0.5)[None, :])[None, :, :]
    check = verify_fano_extension(FiniteJoint(mass))
    assert check.error == pytest.approx(0.1)
    assert check.bound == pytest.approx(0.1166, abs=1e-3)
    assert not check.holds


def test_independence_claim_is_checked():
    mass = np.zeros((2, 2, 2))
    mass[0, 0, :] = 0.25
    mass[1, 1, :] = 0.25
    with pytest.raises(StructureError):
        verify_fano_extension(FiniteJoint(mass), independent=True)


def test_fano_extension_needs_three_axes():
    with pytest.raises(DimensionError):
        verify_fano_extension(FiniteJoint(np.full((2, 2), 0.25)))


@pytest.mark.parametrize(
    "spec, n", MI_CASES, ids=[f"{spec.label()}-n{n}" for spec, n in MI_CASES]
)
def test_mutual_information_chain(spec, n):
    report = mi_exact(spec, ParamMap(CPT, seed=4), n)
    assert 0.0 <= report.exact_or_estimate
    assert report.exact_or_estimate <= report.upper_bound_kl + 1e-9
    assert report.upper_bound_kl <= report.upper_bound_assumption + 1e-9


def test_mutual_information_without_data_is_zero(restricted3, cpt_params):
    assert mi_exact(restricted3, cpt_params, 0).exact_or_estimate == 0.0


def test_mutual_information_matches_generic_joint(restricted3, cpt_params):
    joint = joint_over_graph_and_data(restricted3, cpt_params, 2)
    direct = mutual_information(joint, [0], [1])
    assert mi_exact(restricted3, cpt_params, 2).exact_or_estimate == pytest.approx(direct, abs=1e-9)


def test_monte_carlo_agrees_with_exact(restricted3, cpt_params):
    exact = mi_exact(restricted3, cpt_params, 2).exact_or_estimate
    mc = mi_monte_carlo(restricted3, cpt_params, 2, trials=2000, seed=1)
    assert not mc.exact
    assert abs(mc.exact_or_estimate - exact) <= 3 * mc.std_error


def test_monte_carlo_is_independent_of_worker_count(restricted3, cpt_params):
    one = mi_monte_carlo(restricted3, cpt_params, 3, trials=50, seed=7, workers=1)
    four = mi_monte_carlo(restricted3, cpt_params, 3, trials=50, seed=7, workers=4)
    assert one == four


def test_monte_carlo_single_trial_is_flagged(restricted3, cpt_params):
    report = mi_monte_carlo(restricted3, cpt_params, 1, trials=1, seed=0)
    assert report.unreliable
    assert report.std_error == 0.0


def test_exact_mutual_information_has_a_work_limit(cpt_params):
    with pytest.raises(CapabilityError):
        mi_exact(EnsembleSpec(kind="restricted_all", m=4), cpt_params, 10)


def test_gaussian_mutual_information_is_not_computed(restricted3):
    pm = ParamMap(FamilyModel(kind="gaussian"), seed=0)
    with pytest.raises(CapabilityError):
        mi_exact(restricted3, pm, 1)
    assert mi_upper_bound(restricted3, pm, 1) >= 0.0


def test_entropy_chain_rule_on_random_tables():
    rng = np.random.default_rng(11)
    for _ in range(50):
        j = FiniteJoint(rng.dirichlet(np.full(24, 0.7)).reshape(2, 3, 4))
        chained = entropy(j, [0]) + entropy(j, [1], [0]) + entropy(j, [2], [0, 1])
        assert entropy(j, [0, 1, 2]) == pytest.approx(chained, abs=1e-12)
        assert mutual_information(j, [0], [1, 2]) == pytest.approx(
            mutual_information(j, [0], [1]) + mutual_information(j, [0], [2], [1]), abs=1e-12
        )


@pytest.mark.parametrize(
    "spec",
    [EnsembleSpec(kind="restricted_all", m=3), EnsembleSpec(kind="layered_all", layers=(2, 1))],
    ids=["restricted", "layered"],
)
def test_exact_mutual_information_grows_with_n(spec, cpt_params):
    values = [mi_exact(spec, cpt_params, n).exact_or_estimate for n in range(5)]
    assert values[0] == 0.0
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] > 0
