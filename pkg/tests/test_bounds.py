# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from modules.bounds import (
    FAMILY_ORDER,
    bound_for,
    certified_delta_max,
    delta_max,
    fano_error_floor,
    linear_regression_limits,
    remainder_R,
    table1,
    threshold,
    threshold_corollary,
)
from modules.common import DomainError, UsageError
from modules.dag_core import Dag
from modules.expfam import BayesNet, NodeParams, ParamMap, expected_delta, joint_distribution, materialize
from modules.models import EnsembleSpec, FamilyModel


LN2 = math.log(2)


@pytest.mark.parametrize(
    "family, expected",
    [
        (FamilyModel(kind="cpt", theta_min=1 / math.e), 4.0),
        (FamilyModel(kind="logistic", w_max_1=1.0), 0.5),
        (FamilyModel(kind="noisy_or", theta=0.5), 0.0),
        (FamilyModel(kind="noisy_or", theta=0.9), 2 * math.log(9)),
        (FamilyModel(kind="gaussian", mu_a=0.0, mu_b=0.0), 1.0),
        (FamilyModel(kind="gaussian", mu_a=-1.0, mu_b=0.5, sigma_min=1.0), 4.0),
        (FamilyModel(kind="gaussian", mu_a=-1.0, mu_b=1.0, sigma_min=2.0, sigma_max=2.0, w_max=1.0), 2.0),
    ],
    ids=["cpt", "logistic", "noisy-or-half", "noisy-or", "gaussian-zero-mean", "gaussian", "gaussian-wmax"],
)
def test_delta_max(family, expected):
    assert delta_max(family) == pytest.approx(expected, abs=1e-12)


def test_restricted_threshold_values():
    report = threshold(EnsembleSpec(kind="restricted_all", m=13), LN2)
    assert report.threshold_L == pytest.approx(10 / 2 - 1 / 13)
    assert not report.vacuous

    small = threshold(EnsembleSpec(kind="restricted_all", m=3), LN2)
    assert small.threshold_L == pytest.approx(-1 / 3)
    assert small.vacuous
    assert any("vacuous" in note for note in small.notes)


def test_layered_threshold_value():
    report = threshold(EnsembleSpec(kind="layered_all", layers=(1, 4)), 1.0)
    assert report.threshold_L == pytest.approx(LN2)


def test_restricted_threshold_is_twice_the_rearrangement():
    for m in (5, 13, 40):
        report = threshold(EnsembleSpec(kind="restricted_all", m=m), 1.7)
        assert report.threshold_L == pytest.approx(2 * report.fano_L, rel=1e-12)
        assert report.certified_L == report.fano_L


@pytest.mark.parametrize(
    "spec",
    [
        EnsembleSpec(kind="restricted_sparse", m=10, k=3),
        EnsembleSpec(kind="layered_all", layers=(3, 5, 2)),
        EnsembleSpec(kind="layered_sparse", layers=(4, 6), k=2),
    ],
    ids=["restricted-sparse", "layered", "layered-sparse"],
)
def test_displayed_threshold_equals_rearrangement(spec):
    report = threshold(spec, 0.8)
    assert report.threshold_L == pytest.approx(report.fano_L, rel=1e-12, abs=1e-12)


def test_threshold_scales_inversely_with_delta():
    spec = EnsembleSpec(kind="restricted_all", m=20)
    assert threshold(spec, 1.0).threshold_L == pytest.approx(2 * threshold(spec, 2.0).threshold_L)


@pytest.mark.parametrize("delta", [0.0, -1.0], ids=["zero", "negative"])
def test_threshold_needs_positive_delta(delta):
    with pytest.raises(DomainError):
        threshold(EnsembleSpec(kind="restricted_all", m=5), delta)


def test_noisy_or_at_half_has_no_threshold():
    with pytest.raises(DomainError, match="noisy-OR"):
        bound_for(EnsembleSpec(kind="restricted_all", m=5), FamilyModel(kind="noisy_or", theta=0.5))


def test_single_layer_has_no_threshold():
    with pytest.raises(DomainError):
        threshold(EnsembleSpec(kind="layered_all", layers=(4,)), 1.0)


def test_corollary_non_sparse_matches_restricted_threshold():
    a = threshold_corollary(30, None, 1.3)
    b = threshold(EnsembleSpec(kind="restricted_all", m=30), 1.3)
    assert a.threshold_L == b.threshold_L
    assert a.R is None


def test_corollary_sparse_value():
    m, k, delta = 10, 2, 1.0
    R = (k / m) * ((m - 2) + 2 * math.log(m - 2) + math.log(2) + (m - k - 2) * math.log(k)) + LN2 / m
    assert remainder_R(m, k) == pytest.approx(R)
    report = threshold_corollary(m, k, delta)
    expected = (k * math.log(m - 2) + k * (k - 3) * LN2 / (2 * m) - R) / (2 * delta)
    assert report.threshold_L == pytest.approx(expected)
    assert report.R == pytest.approx(R)


@pytest.mark.parametrize("m, k", [(2, 1), (10, 10), (10, 0)], ids=["m2", "k-ge-m", "k0"])
def test_corollary_sparse_domain(m, k):
    with pytest.raises(DomainError):
        threshold_corollary(m, k, 1.0)


def test_fano_error_floor():
    assert fano_error_floor(math.log(4), 0.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        fano_error_floor(0.0, 0.1)


def test_table1_has_every_cell():
    grid = table1(100, 2)
    assert tuple(grid) == FAMILY_ORDER
    for cells in grid.values():
        assert set(cells) == {"non_sparse", "sparse"}
        assert cells["sparse"].R is not None


def test_table1_cpt_non_sparse_grows_linearly_in_m():
    cpt = [FamilyModel(kind="cpt", theta_min=0.2)]
    small = table1(50, 2, cpt)["cpt"]["non_sparse"].threshold_L
    large = table1(100, 2, cpt)["cpt"]["non_sparse"].threshold_L
    assert large / small == pytest.approx(2.0, rel=0.05)


def test_table1_logistic_sparse_grows_like_log_m():
    logistic = [FamilyModel(kind="logistic", w_max_1=1.0)]
    small = table1(100, 2, logistic)["logistic"]["sparse"].threshold_L
    large = table1(200, 2, logistic)["logistic"]["sparse"].threshold_L
    assert large / small == pytest.approx(math.log(200) / math.log(100), rel=0.1)


def test_table1_logistic_scales_with_inverse_weight_bound():
    one = table1(100, 2, [FamilyModel(kind="logistic", w_max_1=1.0)])["logistic"]
    two = table1(100, 2, [FamilyModel(kind="logistic", w_max_1=2.0)])["logistic"]
    for column in ("non_sparse", "sparse"):
        assert two[column].threshold_L == pytest.approx(one[column].threshold_L / 2, rel=1e-12)


def test_table1_noisy_or_diverges_near_half():
    def cell(theta):
        return table1(100, 2, [FamilyModel(kind="noisy_or", theta=theta)])["noisy_or"]["non_sparse"].threshold_L

    assert cell(0.501) > cell(0.6) > cell(0.9) > 0
    assert cell(0.501) > 100 * cell(0.9)


def test_linear_regression_limits():
    out = linear_regression_limits(20, 3, FamilyModel(kind="gaussian"))
    assert set(out) == {"dense", "sparse"}
    assert out["dense"].ensemble.layers == (1, 19)
    assert out["sparse"].ensemble.k == 3
    with pytest.raises(UsageError):
        linear_regression_limits(20, 3, FamilyModel(kind="cpt"))


def test_threshold_monotone_in_m_and_delta():
    values = [threshold(EnsembleSpec(kind="restricted_all", m=m), 1.0).threshold_L for m in range(4, 51)]
    assert all(b > a for a, b in zip(values, values[1:]))
    spec = EnsembleSpec(kind="restricted_all", m=12)
    by_delta = [threshold(spec, d).threshold_L for d in (0.25, 0.5, 1.0, 2.0, 4.0)]
    assert all(b < a for a, b in zip(by_delta, by_delta[1:]))


# ---------- E[Δ] under the parameter policy never exceeds certified_delta_max ----------
POLICY_FAMILIES = {
    "cpt": [
        FamilyModel(kind="cpt", v=2, theta_min=0.05),
        FamilyModel(kind="cpt", v=3, theta_min=0.2),
        FamilyModel(kind="cpt", v=2, theta_min=0.45),
    ],
    "gaussian": [
        FamilyModel(kind="gaussian", mu_a=-2.0, mu_b=1.0, sigma_min=0.5, sigma_max=1.5),
        FamilyModel(kind="gaussian", mu_a=1.0, mu_b=1.0, sigma_min=1.0, sigma_max=1.0),
        FamilyModel(kind="gaussian", mu_a=-0.3, mu_b=0.3, sigma_min=0.2, sigma_max=3.0, w_max=0.3),
    ],
    "noisy_or": [
        FamilyModel(kind="noisy_or", theta=0.1),
        FamilyModel(kind="noisy_or", theta=0.5),
        FamilyModel(kind="noisy_or", theta=0.9),
    ],
    "logistic": [
        FamilyModel(kind="logistic", w_max_1=0.5),
        FamilyModel(kind="logistic", w_max_1=3.0),
        FamilyModel(kind="logistic", w_max_1=8.0),
    ],
}


def _random_dag(rng: np.random.Generator, m: int) -> Dag:
    order = rng.permutation(m)
    density = rng.uniform(0.2, 0.9)
    edges = [
        (int(order[a]), int(order[b]))
        for a in range(m)
        for b in range(a + 1, m)
        if rng.random() < density
    ]
    return Dag.from_edges(m, edges)


@pytest.mark.parametrize("kind", list(POLICY_FAMILIES), ids=list(POLICY_FAMILIES))
def test_expected_delta_within_certified_bound(kind):
    rng = np.random.default_rng(2024)
    families = POLICY_FAMILIES[kind]
    worst = 0.0
    for trial in range(1000):
        family = families[trial % len(families)]
        m_max = 5 if family.kind == "cpt" and family.v > 2 else 6
        g = _random_dag(rng, int(rng.integers(2, m_max + 1)))
        bn = materialize(ParamMap(family, seed=trial), g)
        joint = joint_distribution(bn) if family.is_discrete else None
        for i in range(g.m):
            value = expected_delta(bn, i, joint)
            assert value <= certified_delta_max(family) + 1e-9, (family, g.edges(), i)
            worst = max(worst, value)
    assert worst > 0


def test_gaussian_policy_exceeds_displayed_closed_form():
    family = FamilyModel(kind="gaussian", mu_a=1.0, mu_b=1.0, sigma_min=1.0, sigma_max=1.0)
    w = -1.0 / math.sqrt(2.0)
    bn = BayesNet(
        Dag.from_edges(2, [(0, 1)]),
        family,
        (NodeParams.gaussian((), 1.0, 1.0), NodeParams.gaussian([w], 1.0, 1.0, parents=(0,))),
        (NodeParams.gaussian((), 1.0, 1.0), NodeParams.gaussian((), 1.0, 1.0)),
    )
    value = expected_delta(bn, 1)
    assert value == pytest.approx(2 * ((w - 1) ** 2 + w**2 / 2))
    assert delta_max(family) == pytest.approx(4.0)
    assert delta_max(family) < value <= certified_delta_max(family)
    assert certified_delta_max(family) == pytest.approx(1 + 2 * (1 + 1 / math.sqrt(2)) ** 2)


def test_noisy_or_certified_delta_uses_both_endpoints():
    def delta(theta, fail):
        return (math.log(fail / (1 - fail)) + math.log(theta / (1 - theta))) * (fail + theta - 1)

    assert certified_delta_max(FamilyModel(kind="noisy_or", theta=0.1)) == pytest.approx(delta(0.1, 0.01))
    assert certified_delta_max(FamilyModel(kind="noisy_or", theta=0.1)) > delta_max(FamilyModel(kind="noisy_or", theta=0.1))
    assert certified_delta_max(FamilyModel(kind="noisy_or", theta=0.5)) == pytest.approx(delta(0.5, 0.25))
    assert certified_delta_max(FamilyModel(kind="noisy_or", theta=0.9)) == pytest.approx(delta(0.9, 0.9))


@pytest.mark.parametrize(
    "family",
    [FamilyModel(kind="cpt", theta_min=0.2), FamilyModel(kind="logistic", w_max_1=2.0)],
    ids=["cpt", "logistic"],
)
def test_certified_delta_matches_closed_form(family):
    assert certified_delta_max(family) == delta_max(family)
    report = bound_for(EnsembleSpec(kind="restricted_all", m=20), family)
    assert report.certified_L == min(report.threshold_L, report.fano_L)


def test_certified_threshold_rescaled_when_policy_exceeds_closed_form():
    family = FamilyModel(kind="gaussian", mu_a=1.0, mu_b=1.0, sigma_min=1.0, sigma_max=1.0)
    report = bound_for(EnsembleSpec(kind="restricted_all", m=40), family)
    assert report.delta_certified == pytest.approx(certified_delta_max(family))
    expected = min(report.threshold_L, report.fano_L) * report.delta_max / report.delta_certified
    assert report.certified_L == pytest.approx(expected)
    assert 0 < report.certified_L < report.fano_L
    assert any("rescaled" in note for note in report.notes)
