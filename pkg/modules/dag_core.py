# -*- coding: utf-8 -*-
"""
Labeled DAGs stored as per-node parent bitmasks.

Markov equivalence is decided structurally (skeleton + v-structures); the
exhaustive d-separation route lives here too so callers can cross-check it.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations, product
from typing import Iterable, Iterator, Optional, Sequence

import networkx as nx

from modules.common import CapabilityError, DimensionError, InvalidDagError, limits, max_enum_m


logger = logging.getLogger(__name__)


def _bits(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def _acyclic(masks: Sequence[int], nodes: Optional[int] = None) -> bool:
    """Kahn elimination restricted to the node set `nodes` (bitmask, default all)."""
    remaining = (1 << len(masks)) - 1 if nodes is None else nodes
    while remaining:
        free = [i for i in _bits(remaining) if not (masks[i] & remaining)]
        if not free:
            return False
        for i in free:
            remaining &= ~(1 << i)
    return True


@dataclass(frozen=True)
class Dag:
    m: int
    parents: tuple[int, ...]
    _checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if not self._checked:
            return
        if self.m < 0:
            raise InvalidDagError(f"节点数必须 ≥ 0：m={self.m}")
        if len(self.parents) != self.m:
            raise DimensionError(f"父集个数 {len(self.parents)} 与 m={self.m} 不一致")
        full = (1 << self.m) - 1
        for i, mask in enumerate(self.parents):
            if mask < 0 or mask & ~full:
                raise InvalidDagError(f"节点 {i} 的父节点索引越界：{sorted(_bits(max(mask, 0)))}")
            if mask >> i & 1:
                raise InvalidDagError(f"节点 {i} 不能是自己的父节点")
        if not _acyclic(self.parents):
            raise InvalidDagError(f"图中存在环：{self.to_dict()['parents']}")

    @classmethod
    def _trusted(cls, m: int, parents: tuple[int, ...]) -> "Dag":
        return cls(m, parents, False)

    @classmethod
    def from_parent_sets(cls, parent_sets: Sequence[Iterable[int]]) -> "Dag":
        m = len(parent_sets)
        masks = []
        for i, ps in enumerate(parent_sets):
            mask = 0
            for j in ps:
                j = int(j)
                if not 0 <= j < m:
                    raise InvalidDagError(f"节点 {i} 的父节点 {j} 超出范围 0..{m - 1}")
                mask |= 1 << j
            masks.append(mask)
        return cls(m, tuple(masks))

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        parent_sets: list[set[int]] = [set() for _ in range(m)]
        for u, v in edges:
            if not (0 <= u < m and 0 <= v < m):
                raise InvalidDagError(f"边 {u}->{v} 超出范围 0..{m - 1}")
            parent_sets[v].add(u)
        return cls.from_parent_sets(parent_sets)

    @classmethod
    def empty(cls, m: int) -> "Dag":
        return cls(m, (0,) * m)

    @classmethod
    def from_dict(cls, payload: dict) -> "Dag":
        parent_sets = payload["parents"]
        if "m" in payload and int(payload["m"]) != len(parent_sets):
            raise DimensionError(f"m={payload['m']} 与父集个数 {len(parent_sets)} 不一致")
        return cls.from_parent_sets(parent_sets)

    def parents_of(self, i: int) -> tuple[int, ...]:
        return _bits(self.parents[i])

    def in_degree(self, i: int) -> int:
        return bin(self.parents[i]).count("1")

    @property
    def max_in_degree(self) -> int:
        return max((self.in_degree(i) for i in range(self.m)), default=0)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v in range(self.m) for u in self.parents_of(v)]

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.parents[v] >> u & 1)

    def adjacent(self, u: int, v: int) -> bool:
        return self.has_edge(u, v) or self.has_edge(v, u)

    @cached_property
    def order(self) -> tuple[int, ...]:
        return tuple(topological_order(self))

    def position(self, i: int) -> int:
        """1-based position t_G(i) of node i in the canonical topological order."""
        return self.order.index(i) + 1

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.m))
        graph.add_edges_from(self.edges())
        return graph

    def to_dict(self) -> dict:
        return {"m": self.m, "parents": [list(self.parents_of(i)) for i in range(self.m)]}


@dataclass(frozen=True)
class Skeleton:
    m: int
    edges: frozenset

    def __post_init__(self):
        for a, b in self.edges:
            if a == b or not (0 <= a < self.m and 0 <= b < self.m):
                raise InvalidDagError(f"骨架边非法：({a}, {b})")


@dataclass(frozen=True, order=True)
class VStructure:
    collider: int
    spouses: tuple[int, int]


def topological_order(g: Dag) -> list[int]:
    """Repeatedly remove the lowest-indexed node with no remaining parents."""
    try:
        return list(nx.lexicographical_topological_sort(g.to_networkx()))
    except nx.NetworkXUnfeasible as exc:
        raise InvalidDagError("图中存在环，无法拓扑排序") from exc


def skeleton(g: Dag) -> Skeleton:
    return Skeleton(g.m, frozenset((min(u, v), max(u, v)) for u, v in g.edges()))


def v_structures(g: Dag) -> frozenset:
    out = set()
    for c in range(g.m):
        for a, b in combinations(g.parents_of(c), 2):
            if not g.adjacent(a, b):
                out.add(VStructure(c, (a, b)))
    return frozenset(out)


def markov_equivalent(g1: Dag, g2: Dag) -> bool:
    if g1.m != g2.m:
        raise DimensionError(f"节点数不一致：{g1.m} vs {g2.m}")
    if g1.parents == g2.parents:
        return True
    return skeleton(g1) == skeleton(g2) and v_structures(g1) == v_structures(g2)


def covered_edges(g: Dag) -> list[tuple[int, int]]:
    """Edges u->v with pa(v) = pa(u) ∪ {u}; reversing one keeps the class."""
    return [(u, v) for u, v in g.edges() if g.parents[v] == g.parents[u] | (1 << u)]


def is_singleton_class(g: Dag) -> bool:
    # A class has more than one member iff some member edge is covered.
    return not covered_edges(g)


def equivalence_class_size(g: Dag) -> int:
    cap = max_enum_m()
    if g.m > cap:
        raise CapabilityError(f"等价类枚举仅支持 m ≤ {cap}，当前 m={g.m}")
    pairs = sorted(skeleton(g).edges)
    target = v_structures(g)
    size = 0
    for flips in product((False, True), repeat=len(pairs)):
        masks = [0] * g.m
        for (a, b), flip in zip(pairs, flips):
            u, v = (b, a) if flip else (a, b)
            masks[v] |= 1 << u
        if not _acyclic(masks):
            continue
        if v_structures(Dag._trusted(g.m, tuple(masks))) == target:
            size += 1
    return size


def check_enum_limits(m: int, k: Optional[int] = None) -> None:
    cap = max_enum_m()
    if m <= cap:
        return
    lim = limits()
    if k is not None and k <= int(lim["max_enum_k_sparse"]) and m <= int(lim["max_enum_m_sparse"]):
        return
    if k is None:
        raise CapabilityError(f"DAG 全量枚举仅支持 m ≤ {cap}，当前 m={m}")
    raise CapabilityError(
        f"稀疏 DAG 枚举仅支持 m ≤ {lim['max_enum_m_sparse']} 且 k ≤ {lim['max_enum_k_sparse']}，"
        f"当前 m={m}, k={k}"
    )


@lru_cache(maxsize=None)
def _dag_masks(m: int, k: Optional[int]) -> tuple[tuple[int, ...], ...]:
    candidates = []
    for i in range(m):
        allowed = [
            mask
            for mask in range(1 << m)
            if not mask >> i & 1 and (k is None or bin(mask).count("1") <= k)
        ]
        candidates.append(allowed)

    out: list[tuple[int, ...]] = []
    current = [0] * m

    def extend(i: int) -> None:
        if i == m:
            if _acyclic(current):
                out.append(tuple(current))
            return
        prefix = (1 << (i + 1)) - 1
        for mask in candidates[i]:
            current[i] = mask
            if _acyclic(current, prefix):
                extend(i + 1)
        current[i] = 0

    extend(0)
    logger.debug("enumerated %d DAGs for m=%d k=%s", len(out), m, k)
    return tuple(out)


def enumerate_dags(m: int, k: Optional[int] = None) -> Iterator[Dag]:
    """Every labeled DAG on m nodes (in-degree ≤ k if given), lexicographic on parent masks."""
    if m < 0:
        raise DimensionError(f"m 必须 ≥ 0：{m}")
    if k is not None and k < 0:
        raise DimensionError(f"k 必须 ≥ 0：{k}")
    check_enum_limits(m, k)
    for masks in _dag_masks(m, k):
        yield Dag._trusted(m, masks)


def d_separated(g: Dag, xs: Iterable[int], ys: Iterable[int], zs: Iterable[int] = ()) -> bool:
    """X ⫫ Y | Z in g, via the moralized ancestral graph."""
    xs, ys, zs = set(xs), set(ys), set(zs)
    if xs & ys or xs & zs or ys & zs:
        raise DimensionError(f"d-分离的三个集合必须两两不交：{xs}, {ys}, {zs}")
    graph = g.to_networkx()
    keep = xs | ys | zs
    for node in list(keep):
        keep |= nx.ancestors(graph, node)
    moral = nx.moral_graph(graph.subgraph(keep))
    moral.remove_nodes_from(zs)
    return not any(nx.has_path(moral, x, y) for x in xs for y in ys)


def independence_signature(g: Dag) -> frozenset:
    """All pairwise statements (x, y, Z) with x ⫫ y | Z that hold in g."""
    out = set()
    for x, y in combinations(range(g.m), 2):
        rest = [v for v in range(g.m) if v not in (x, y)]
        for r in range(len(rest) + 1):
            for zs in combinations(rest, r):
                if d_separated(g, [x], [y], zs):
                    out.add((x, y, zs))
    return frozenset(out)
