# -*- coding: utf-8 -*-
"""
DAG ensembles: restricted (singleton-class) and layered, all or in-degree ≤ k.

Counts are Python ints throughout; nothing here rounds.
"""

import logging
import math
from functools import lru_cache
from itertools import combinations, product
from typing import Optional

import numpy as np
from scipy.special import gammaln

from modules.common import LN2, CapabilityError, DomainError, UsageError, derive_rng, limits
from modules.dag_core import Dag, check_enum_limits, enumerate_dags, is_singleton_class
from modules.models import EnsembleSpec


logger = logging.getLogger(__name__)


# ---------- counting ----------
@lru_cache(maxsize=None)
def count_essential_recurrence(m: int) -> int:
    """c_m = Σ_{s=1}^m (−1)^{s+1} C(m,s) (2^{m−s} − (m−s))^s c_{m−s}, c_0 = 1."""
    if m < 0:
        raise DomainError(f"m 必须 ≥ 0：{m}")
    if m == 0:
        return 1
    total = 0
    for s in range(1, m + 1):
        term = math.comb(m, s) * (2 ** (m - s) - (m - s)) ** s * count_essential_recurrence(m - s)
        total += term if s % 2 else -term
    return total


def count_essential_brute(m: int, k: Optional[int] = None) -> int:
    return sum(1 for g in enumerate_dags(m, k) if is_singleton_class(g))


def count_bounds_restricted(m: int) -> tuple[int, int]:
    if m < 1:
        raise DomainError(f"m 必须 ≥ 1：{m}")
    lower = 2 ** (m * (m - 3) // 2 + 1)
    upper = math.factorial(m) * 2 ** (m * (m - 1) // 2)
    return lower, upper


def _check_sparse_domain(m: int, k: int) -> None:
    if not (k > 1 and m > 2):
        raise DomainError(f"稀疏计数公式要求 k > 1 且 m > 2，当前 m={m}, k={k}")
    if k >= m:
        raise DomainError(f"k 必须小于 m，当前 m={m}, k={k}")


def _binom_prefix(n: int, k: int) -> int:
    return sum(math.comb(n, i) for i in range(k + 1))


def count_bounds_sparse(m: int, k: int) -> tuple[int, int]:
    _check_sparse_domain(m, k)
    lower = 2 ** (k * (k - 3) // 2 + 1)
    upper = math.factorial(m) * 2 ** (k * (k - 1) // 2)
    for j in range(k + 1, m):
        lower *= _binom_prefix(j - 1, k)
        upper *= _binom_prefix(j, k)
    return lower, upper


def count_sparse_recurrence_bounds(m: int, k: int) -> tuple[int, int]:
    """
    Chain the one-step terminal-vertex bounds
        c_{j,k} ≤ j·(Σ_{i≤k} C(j−1,i))·c_{j−1,k},  c_{j,k} ≥ (Σ_{i≤k} C(j−2,i))·c_{j−1,k}
    from c_{k,k} = c_k, itself bracketed by the restricted-ensemble bounds.
    Tighter than the closed forms by one factor on each side.
    """
    _check_sparse_domain(m, k)
    lower, upper = count_bounds_restricted(k)
    for j in range(k + 1, m + 1):
        lower *= _binom_prefix(j - 2, k)
        upper *= j * _binom_prefix(j - 1, k)
    return lower, upper


def _require_layered(spec: EnsembleSpec) -> tuple[int, ...]:
    if not spec.is_layered:
        raise UsageError(f"该操作仅适用于分层集合，当前为 {spec.kind}")
    return spec.layers


def count_layered(spec: EnsembleSpec) -> int:
    layers = _require_layered(spec)
    total = 1
    for below, above in zip(layers[:-1], layers[1:]):
        per_node = _binom_prefix(above, spec.k) if spec.is_sparse else 2 ** above
        total *= per_node ** below
    return total


def count_ensemble(spec: EnsembleSpec) -> int:
    """Exact ensemble size; restricted kinds go through enumeration."""
    if spec.is_layered:
        return count_layered(spec)
    return count_essential_brute(spec.m, spec.k)


def log_size_lower_bound(spec: EnsembleSpec) -> float:
    """Closed-form lower bound on ln |ensemble|, in nats."""
    m, k = spec.m, spec.k
    if spec.kind == "restricted_all":
        return (m * (m - 3) / 2 + 1) * LN2
    if spec.kind == "restricted_sparse":
        _check_sparse_domain(m, k)
        core = gammaln(m - 1) - (m - k - 2) * math.log(k) - gammaln(k + 1)
        return float(k * core + (k * (k - 3) / 2 + 1) * LN2)
    layers = spec.layers
    pairs = list(zip(layers[:-1], layers[1:]))
    if spec.kind == "layered_all":
        return LN2 * sum(below * above for below, above in pairs)
    return k * sum(below * math.log(above / k) for below, above in pairs)


# ---------- enumeration / membership ----------
def _layer_bounds(spec: EnsembleSpec) -> list[int]:
    return np.concatenate(([0], np.cumsum(spec.layers))).astype(int).tolist()


def _above_nodes(spec: EnsembleSpec) -> list[tuple[int, ...]]:
    """Per node, the nodes it may take as parents (the next layer up)."""
    layers = spec.layers
    starts = _layer_bounds(spec)
    out: list[tuple[int, ...]] = []
    for idx, size in enumerate(layers):
        above = () if idx == len(layers) - 1 else tuple(range(starts[idx + 1], starts[idx + 2]))
        out.extend([above] * size)
    return out


def _above_masks(spec: EnsembleSpec) -> list[int]:
    return [sum(1 << j for j in above) for above in _above_nodes(spec)]


def _layer_slots(spec: EnsembleSpec) -> list[list[int]]:
    """Allowed parent masks per node, ascending."""
    slots: list[list[int]] = []
    for above in _above_nodes(spec):
        top = min(spec.k, len(above)) if spec.is_sparse else len(above)
        masks = [sum(1 << j for j in chosen) for r in range(top + 1) for chosen in combinations(above, r)]
        slots.append(sorted(masks))
    return slots


@lru_cache(maxsize=64)
def _members(kind: str, m: int, k: Optional[int], layers: Optional[tuple[int, ...]]) -> tuple[Dag, ...]:
    spec = EnsembleSpec(kind=kind, m=m, k=k, layers=layers)
    if spec.is_layered:
        out = tuple(Dag._trusted(m, masks) for masks in product(*_layer_slots(spec)))
    else:
        out = tuple(g for g in enumerate_dags(m, k) if is_singleton_class(g))
    logger.debug("cached %d members of %s", len(out), spec.label())
    return out


def check_enumerable(spec: EnsembleSpec) -> None:
    if spec.is_layered:
        size = count_layered(spec)
        cap = int(limits()["max_layered_enum"])
        if size > cap:
            raise CapabilityError(f"分层集合规模 {size} 超过枚举上限 {cap}：{spec.label()}")
    else:
        check_enum_limits(spec.m, spec.k)


def enumerate_ensemble(spec: EnsembleSpec) -> tuple[Dag, ...]:
    """All members in canonical index order (lexicographic on parent masks)."""
    check_enumerable(spec)
    return _members(spec.kind, spec.m, spec.k, spec.layers)


def is_member(spec: EnsembleSpec, g: Dag) -> bool:
    if g.m != spec.m:
        return False
    if spec.is_layered:
        return all(
            mask & ~above == 0 and (not spec.is_sparse or bin(mask).count("1") <= spec.k)
            for mask, above in zip(g.parents, _above_masks(spec))
        )
    if spec.is_sparse and g.max_in_degree > spec.k:
        return False
    return is_singleton_class(g)


# ---------- sampling ----------
def _draw_layered(spec: EnsembleSpec, rng: np.random.Generator) -> Dag:
    layers = spec.layers
    starts = _layer_bounds(spec)
    masks = []
    for idx, size in enumerate(layers):
        for _ in range(size):
            if idx == len(layers) - 1:
                masks.append(0)
                continue
            above = list(range(starts[idx + 1], starts[idx + 2]))
            if spec.is_sparse:
                sizes = np.arange(min(spec.k, len(above)) + 1)
                weights = np.array([math.comb(len(above), int(j)) for j in sizes], dtype=float)
                j = int(rng.choice(sizes, p=weights / weights.sum()))
                chosen = rng.choice(above, size=j, replace=False) if j else []
            else:
                chosen = [a for a, bit in zip(above, rng.integers(0, 2, size=len(above))) if bit]
            mask = 0
            for a in chosen:
                mask |= 1 << int(a)
            masks.append(mask)
    return Dag._trusted(spec.m, tuple(masks))


def sample_batch(spec: EnsembleSpec, seed: int, count: int) -> list[Dag]:
    """`count` independent uniform draws from one seed-derived generator."""
    if count < 0:
        raise UsageError(f"count 必须 ≥ 0：{count}")
    rng = derive_rng(seed)
    if spec.is_layered:
        return [_draw_layered(spec, rng) for _ in range(count)]
    members = enumerate_ensemble(spec)
    return [members[int(i)] for i in rng.integers(0, len(members), size=count)]


def sample_uniform(spec: EnsembleSpec, seed: int) -> Dag:
    return sample_batch(spec, seed, 1)[0]
