# -*- coding: utf-8 -*-
"""
Structure decoders over an enumerable ensemble: argmax of a score, ties to the lowest index.

oracle_bayes    log P(S | G, Θ(G)) with the true parameter map
max_likelihood  profile log-likelihood with plug-in MLE parameters
bic             max_likelihood − (ln n / 2) · free-parameter count
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, xlogy

from modules.common import UsageError
from modules.dag_core import Dag
from modules.ensembles import enumerate_ensemble
from modules.expfam import Dataset, ParamMap, materialize_ensemble, node_log_prob
from modules.models import DecoderKind, EnsembleSpec, FamilyModel


LOGISTIC_BOX = 30.0


@dataclass(frozen=True)
class Decoder:
    kind: DecoderKind = "oracle_bayes"
    tie_break: str = "lowest_index"

    def __post_init__(self):
        if self.kind not in ("oracle_bayes", "max_likelihood", "bic"):
            raise UsageError(f"未知解码器：{self.kind}")


# ---------- per-node profile likelihoods ----------
def _cpt_node(rows: np.ndarray, i: int, parents: tuple[int, ...], v: int) -> float:
    if parents:
        radix = v ** np.arange(len(parents) - 1, -1, -1)
        cfg = rows[:, list(parents)] @ radix
    else:
        cfg = np.zeros(rows.shape[0], dtype=int)
    counts = np.zeros((v ** len(parents), v))
    np.add.at(counts, (cfg, rows[:, i]), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return float(np.sum(xlogy(counts, counts) - xlogy(counts, totals)))


def _logistic_node(rows: np.ndarray, i: int, parents: tuple[int, ...]) -> float:
    y = rows[:, i].astype(float)
    if not parents:
        return -rows.shape[0] * math.log(2.0)
    xs = rows[:, list(parents)].astype(float)

    def nll(w):
        eta = xs @ w
        value = np.sum(np.logaddexp(0.0, eta) - y * eta)
        grad = xs.T @ (expit(eta) - y)
        return value, grad

    res = minimize(
        nll, np.zeros(len(parents)), jac=True, method="L-BFGS-B",
        bounds=[(-LOGISTIC_BOX, LOGISTIC_BOX)] * len(parents),
    )
    return -float(res.fun)


def _noisy_or_stats(rows: np.ndarray, i: int, parents: tuple[int, ...]) -> list[tuple[float, int, int]]:
    """(exponent e, #x=0, #x=1) groups; P(X=0) = θ^e for children, roots use P(X=1) = θ."""
    x = rows[:, i]
    if not parents:
        return [(-1.0, int(np.sum(x == 0)), int(np.sum(x == 1)))]
    on = rows[:, list(parents)].sum(axis=1)
    out = []
    for s in np.unique(on):
        sel = on == s
        out.append((1.0 + float(s) / len(parents), int(np.sum(x[sel] == 0)), int(np.sum(x[sel] == 1))))
    return out


def _noisy_or_profile(groups: list[tuple[float, int, int]]) -> float:
    def ll(theta: float) -> float:
        total = 0.0
        for e, n0, n1 in groups:
            if e < 0:
                total += n1 * math.log(theta) + n0 * math.log1p(-theta)
            else:
                total += n0 * e * math.log(theta) + n1 * math.log1p(-(theta**e))
        return total

    res = minimize_scalar(lambda t: -ll(t), bounds=(1e-9, 1 - 1e-9), method="bounded")
    return ll(float(res.x))


def _gaussian_stats(rows: np.ndarray, i: int, parents: tuple[int, ...]) -> tuple[float, float, float]:
    """(RSS, Σx, n) for a child via no-intercept OLS; for a root the raw sums (Σx², Σx, n)."""
    y = rows[:, i]
    if not parents:
        return float(y @ y), float(y.sum()), float(len(y))
    xs = rows[:, list(parents)]
    w, *_ = np.linalg.lstsq(xs, y, rcond=None)
    resid = y - xs @ w
    return float(resid @ resid), 0.0, 0.0


def _gaussian_profile(stats: list[tuple[float, float, float]], is_root: list[bool], n: int, m: int) -> float:
    rss = sum(s[0] for s, r in zip(stats, is_root) if not r)
    root_sq = sum(s[0] for s, r in zip(stats, is_root) if r)
    root_sum = sum(s[1] for s, r in zip(stats, is_root) if r)
    root_n = sum(s[2] for s, r in zip(stats, is_root) if r)
    if root_n:
        rss += root_sq - root_sum**2 / root_n
    var = max(rss / (n * m), 1e-12)
    return -0.5 * n * m * (math.log(2 * math.pi * var) + 1.0)


def free_parameters(family: FamilyModel, g: Dag) -> int:
    if family.kind == "cpt":
        return sum((family.v - 1) * family.v ** g.in_degree(i) for i in range(g.m))
    if family.kind == "noisy_or":
        return 0
    extra = 2 if family.kind == "gaussian" else 0  # shared σ and μ
    return sum(g.in_degree(i) for i in range(g.m)) + extra


# ---------- scoring ----------
def _cached(fn: Callable) -> Callable:
    cache: dict = {}

    def inner(i: int, parents: tuple[int, ...]):
        key = (i, parents)
        if key not in cache:
            cache[key] = fn(i, parents)
        return cache[key]

    return inner


def max_likelihood_scores(data: Dataset, members: tuple[Dag, ...], family: FamilyModel) -> np.ndarray:
    rows = data.rows
    n, m = data.n, data.m
    if n == 0:
        return np.zeros(len(members))
    if family.kind == "cpt":
        node = _cached(lambda i, pa: _cpt_node(rows, i, pa, family.v))
        return np.array([sum(node(i, g.parents_of(i)) for i in range(m)) for g in members])
    if family.kind == "logistic":
        node = _cached(lambda i, pa: _logistic_node(rows, i, pa))
        return np.array([sum(node(i, g.parents_of(i)) for i in range(m)) for g in members])
    if family.kind == "noisy_or":
        node = _cached(lambda i, pa: _noisy_or_stats(rows, i, pa))
        return np.array([
            _noisy_or_profile([grp for i in range(m) for grp in node(i, g.parents_of(i))]) for g in members
        ])
    node = _cached(lambda i, pa: _gaussian_stats(rows, i, pa))
    return np.array([
        _gaussian_profile(
            [node(i, g.parents_of(i)) for i in range(m)], [not g.parents_of(i) for i in range(m)], n, m
        )
        for g in members
    ])


def oracle_scores(data: Dataset, spec: EnsembleSpec, pm: ParamMap) -> np.ndarray:
    nets = materialize_ensemble(pm, spec)
    if data.n == 0:
        return np.zeros(len(nets))
    # node terms depend on (node, parents, position) only, shared across members
    cache: dict = {}
    out = []
    for bn in nets:
        total = 0.0
        for i in range(bn.m):
            parents = bn.g.parents_of(i)
            key = (i, parents, bn.g.position(i) if parents else 1)
            if key not in cache:
                cache[key] = float(node_log_prob(bn, i, data.rows).sum())
            total += cache[key]
        out.append(total)
    return np.array(out)


def scores(d: Decoder, data: Dataset, spec: EnsembleSpec, pm: ParamMap) -> np.ndarray:
    members = enumerate_ensemble(spec)
    if data.m != spec.m:
        raise UsageError(f"数据列数 {data.m} 与集合节点数 {spec.m} 不一致")
    if d.kind == "oracle_bayes":
        return oracle_scores(data, spec, pm)
    out = max_likelihood_scores(data, members, pm.family)
    if d.kind == "bic" and data.n > 1:
        penalty = 0.5 * math.log(data.n)
        out = out - penalty * np.array([free_parameters(pm.family, g) for g in members], dtype=float)
    return out


def decode_index(d: Decoder, data: Dataset, spec: EnsembleSpec, pm: ParamMap) -> int:
    # np.argmax returns the first maximum, i.e. the lowest canonical index
    return int(np.argmax(scores(d, data, spec, pm)))


def decode(d: Decoder, data: Dataset, spec: EnsembleSpec, pm: ParamMap) -> Dag:
    return enumerate_ensemble(spec)[decode_index(d, data, spec, pm)]
