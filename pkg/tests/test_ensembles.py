# -*- coding: utf-8 -*-
import math
from collections import Counter

import pytest
from pydantic import ValidationError

from modules.common import CapabilityError, DomainError, UsageError
from modules.dag_core import Dag
from modules.ensembles import (
    count_bounds_restricted,
    count_bounds_sparse,
    count_essential_brute,
    count_essential_recurrence,
    count_layered,
    count_sparse_recurrence_bounds,
    enumerate_ensemble,
    is_member,
    log_size_lower_bound,
    sample_batch,
    sample_uniform,
)
from modules.models import EnsembleSpec


SAMPLE_SIZE = 4000
# essential graphs with a singleton Markov class (OEIS A058814 shifted)
ESSENTIAL_COUNTS = [1, 1, 1, 4, 59, 2616]

LAYERED_CASES = [
    ((2, 2), None, 16),
    ((1, 4), 1, 5),
    ((3,), None, 1),
    ((3, 3), 1, 64),
    ((2, 3), 2, 49),
    ((1, 2, 3), None, 256),
    ((4, 3), None, 4096),
    ((2, 2, 2), 1, 81),
    ((3, 2, 1), 1, 108),
    ((1, 40), 1, 41),
]


def _layered(layers, k=None) -> EnsembleSpec:
    return EnsembleSpec(kind="layered_sparse" if k else "layered_all", layers=layers, k=k)


@pytest.mark.parametrize("m", range(6), ids=[f"m{m}" for m in range(6)])
def test_recurrence_matches_known_values(m):
    assert count_essential_recurrence(m) == ESSENTIAL_COUNTS[m]


@pytest.mark.parametrize("m", range(5), ids=[f"m{m}" for m in range(5)])
def test_brute_force_matches_recurrence(m):
    assert count_essential_brute(m) == count_essential_recurrence(m)


@pytest.mark.slow
def test_brute_force_matches_recurrence_m5():
    assert count_essential_brute(5) == 2616


def test_restricted_bounds_bracket_exact_count():
    assert count_bounds_restricted(2) == (1, 4)
    for m in range(1, 7):
        lower, upper = count_bounds_restricted(m)
        assert lower <= count_essential_recurrence(m) <= upper


def test_sparse_closed_form_bounds():
    assert count_bounds_sparse(4, 2) == (4, 336)
    lower, upper = count_bounds_sparse(4, 2)
    assert lower <= count_essential_brute(4, 2) <= upper


def test_sparse_recurrence_bounds_at_four_nodes():
    assert count_sparse_recurrence_bounds(4, 2) == (8, 1344)


@pytest.mark.parametrize(
    "m, k",
    [(4, 2), pytest.param(5, 2, marks=pytest.mark.slow), pytest.param(5, 3, marks=pytest.mark.slow)],
    ids=["m4-k2", "m5-k2", "m5-k3"],
)
def test_sparse_bounds_sandwich_the_count(m, k):
    exact = count_essential_brute(m, k)
    for lower, upper in (count_bounds_sparse(m, k), count_sparse_recurrence_bounds(m, k)):
        assert lower <= exact <= upper


@pytest.mark.parametrize("m, k", [(3, 1), (2, 1), (4, 4)], ids=["k1", "m2", "k-ge-m"])
def test_sparse_bounds_domain(m, k):
    with pytest.raises(DomainError):
        count_bounds_sparse(m, k)


@pytest.mark.parametrize(
    "layers, k, expected", LAYERED_CASES, ids=[f"{l}-k{k}" for l, k, _ in LAYERED_CASES]
)
def test_layered_counts(layers, k, expected):
    spec = _layered(layers, k)
    assert count_layered(spec) == expected
    assert len(enumerate_ensemble(spec)) == expected
    assert log_size_lower_bound(spec) <= math.log(expected) + 1e-12


def test_layered_count_rejects_restricted_spec(restricted3):
    with pytest.raises(UsageError):
        count_layered(restricted3)


@pytest.mark.parametrize(
    "spec, expected",
    [
        (EnsembleSpec(kind="restricted_all", m=3), math.log(2)),
        (EnsembleSpec(kind="layered_all", layers=(2, 2)), 4 * math.log(2)),
        (EnsembleSpec(kind="layered_sparse", layers=(1, 4), k=2), 2 * math.log(2)),
        (EnsembleSpec(kind="restricted_sparse", m=4, k=2), 0.0),
    ],
    ids=["restricted", "layered", "layered-sparse", "restricted-sparse"],
)
def test_log_size_lower_bound(spec, expected):
    assert log_size_lower_bound(spec) == pytest.approx(expected, abs=1e-12)


def test_restricted_members_start_with_the_empty_graph(restricted3):
    members = enumerate_ensemble(restricted3)
    assert len(members) == 4
    assert members[0] == Dag.empty(3)
    assert all(len(g.edges()) in (0, 2) for g in members)


def test_restricted_two_nodes_is_only_the_empty_graph():
    members = enumerate_ensemble(EnsembleSpec(kind="restricted_all", m=2))
    assert members == (Dag.empty(2),)


def test_layered_members_point_upwards(layered11):
    members = enumerate_ensemble(layered11)
    assert members == (Dag.empty(2), Dag.from_edges(2, [(1, 0)]))


def test_membership(restricted3, layered11, chain3, collider3):
    assert is_member(restricted3, collider3)
    assert not is_member(restricted3, chain3)
    assert not is_member(EnsembleSpec(kind="restricted_sparse", m=3, k=1), collider3)
    assert is_member(layered11, Dag.from_edges(2, [(1, 0)]))
    assert not is_member(layered11, Dag.from_edges(2, [(0, 1)]))
    assert not is_member(layered11, Dag.empty(3))


def test_large_layered_ensemble_is_not_enumerable():
    with pytest.raises(CapabilityError):
        enumerate_ensemble(_layered((10, 10)))


def test_large_layered_ensemble_can_still_be_sampled():
    spec = _layered((10, 10))
    graphs = sample_batch(spec, seed=1, count=20)
    assert all(is_member(spec, g) for g in graphs)


@pytest.mark.parametrize(
    "spec",
    [
        EnsembleSpec(kind="restricted_all", m=3),
        EnsembleSpec(kind="layered_all", layers=(1, 2)),
        EnsembleSpec(kind="layered_sparse", layers=(1, 3), k=1),
    ],
    ids=["restricted", "layered", "layered-sparse"],
)
def test_sampling_is_uniform(spec):
    members = enumerate_ensemble(spec)
    counts = Counter(sample_batch(spec, seed=5, count=SAMPLE_SIZE))
    assert set(counts) <= set(members)
    for g in members:
        assert counts[g] / SAMPLE_SIZE == pytest.approx(1 / len(members), abs=0.035)


def test_sampling_is_deterministic_per_seed(restricted3):
    assert sample_batch(restricted3, 9, 10) == sample_batch(restricted3, 9, 10)
    assert sample_uniform(restricted3, 9) == sample_batch(restricted3, 9, 1)[0]


def test_negative_sample_count(restricted3):
    with pytest.raises(UsageError):
        sample_batch(restricted3, 0, -1)


@pytest.mark.parametrize(
    "payload",
    [
        {"kind": "restricted_sparse", "m": 4},
        {"kind": "restricted_all", "m": 4, "k": 2},
        {"kind": "layered_all", "layers": [2, 0]},
        {"kind": "layered_all", "m": 5, "layers": [2, 2]},
        {"kind": "restricted_sparse", "m": 4, "k": 4},
        {"kind": "restricted_sparse", "m": 1, "k": 1},
        {"kind": "layered_sparse", "layers": [1], "k": 1},
    ],
    ids=["missing-k", "stray-k", "empty-layer", "layer-sum", "k-too-big", "single-node", "single-layer-sparse"],
)
def test_spec_validation(payload):
    with pytest.raises(ValidationError):
        EnsembleSpec(**payload)


def test_wide_sparse_layer_lists_parent_sets_in_mask_order():
    members = enumerate_ensemble(_layered((1, 3), 1))
    assert [g.parents[0] for g in members] == [0, 1 << 1, 1 << 2, 1 << 3]
    wide = enumerate_ensemble(_layered((2, 30), 1))
    assert len(wide) == 31**2
    assert wide[-1].parents[:2] == (1 << 31, 1 << 31)
