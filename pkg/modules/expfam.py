# -*- coding: utf-8 -*-
"""
Conditional families of a Bayesian network in exponential-family form.

Sufficient statistics per family:
    cpt        one-hot(x) over v values, η = log θ row, μ = softmax(η)
    gaussian   x / (σ/√2), η = mean / (σ/√2), μ = η
    noisy_or   1[x = 0] (failure), η = logit(P(X = 0)), μ = sigmoid(η)
    logistic   x, η = wᵀx_π, μ = sigmoid(η)
All logs are natural.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp, rel_entr, softmax
from scipy.stats import norm

from modules.common import (
    CapabilityError,
    DimensionError,
    DomainError,
    FeasibilityError,
    derive_rng,
    limits,
    tolerance,
)
from modules.dag_core import Dag
from modules.ensembles import enumerate_ensemble
from modules.models import EnsembleSpec, FamilyModel


logger = logging.getLogger(__name__)

# seed-derivation tags, one per family
_FAMILY_TAG = {"cpt": 11, "gaussian": 12, "noisy_or": 13, "logistic": 14}
_GLOBAL = 0xFFFF


@dataclass(frozen=True, eq=False)
class NodeParams:
    """Parameters of one node conditional; which fields are set depends on the family."""

    kind: str
    parents: tuple[int, ...] = ()
    table: Optional[np.ndarray] = None  # cpt, shape (v^|π|, v)
    weights: Optional[np.ndarray] = None  # gaussian / logistic, shape (|π|,)
    mu: float = 0.0  # gaussian root mean
    sigma: float = 1.0  # gaussian shared σ, conditional variance σ²/2
    theta: float = 0.5  # noisy-OR shared failure probability

    @classmethod
    def cpt(cls, table, parents: Sequence[int] = ()) -> "NodeParams":
        table = np.atleast_2d(np.asarray(table, dtype=float))
        return cls("cpt", tuple(parents), table=table)

    @classmethod
    def gaussian(cls, weights=(), mu: float = 0.0, sigma: float = 1.0, parents: Sequence[int] = ()) -> "NodeParams":
        return cls("gaussian", tuple(parents), weights=np.asarray(weights, dtype=float), mu=mu, sigma=sigma)

    @classmethod
    def noisy_or(cls, theta: float, parents: Sequence[int] = ()) -> "NodeParams":
        return cls("noisy_or", tuple(parents), theta=theta)

    @classmethod
    def logistic(cls, weights=(), parents: Sequence[int] = ()) -> "NodeParams":
        weights = np.asarray(weights, dtype=float)
        if not parents and weights.size:
            parents = tuple(range(weights.size))
        return cls("logistic", tuple(parents), weights=weights)

    @property
    def n_parents(self) -> int:
        if self.parents:
            return len(self.parents)
        if self.weights is not None:
            return int(self.weights.size)
        if self.table is not None and self.table.shape[0] > 1:
            return int(round(math.log(self.table.shape[0], self.table.shape[1])))
        return 0

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "parents": list(self.parents)}
        if self.table is not None:
            out["table"] = self.table.tolist()
        if self.weights is not None:
            out["weights"] = self.weights.tolist()
        if self.kind == "gaussian":
            out.update(mu=self.mu, sigma=self.sigma)
        if self.kind == "noisy_or":
            out["theta"] = self.theta
        return out


@dataclass(frozen=True)
class ParamMap:
    """Seeded policy Θ: (node, parent set, topological position) → node parameters."""

    family: FamilyModel
    seed: int = 0

    def globals(self) -> tuple[float, float]:
        """Shared (μ, σ) of the Gaussian family."""
        return _gaussian_globals(self)

    def node_params(self, node: int, parents: tuple[int, ...], position: int = 1) -> NodeParams:
        return _node_params(self, node, parents, position)

    def root_params(self, node: int) -> NodeParams:
        """Q₀ for this node: the conditional it would get with no parents."""
        return _node_params(self, node, (), 1)


@dataclass(frozen=True, eq=False)
class BayesNet:
    g: Dag
    family: FamilyModel
    nodes: tuple[NodeParams, ...]
    roots: tuple[NodeParams, ...] = field(default=())

    @property
    def m(self) -> int:
        return self.g.m


@dataclass(frozen=True, eq=False)
class Dataset:
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise DimensionError(f"数据必须是二维矩阵，当前形状 {self.rows.shape}")

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def m(self) -> int:
        return int(self.rows.shape[1])


# ---------- parameter policy ----------
def _mask(parents: Sequence[int]) -> int:
    out = 0
    for j in parents:
        out |= 1 << int(j)
    return out


@lru_cache(maxsize=None)
def _gaussian_globals(pm: ParamMap) -> tuple[float, float]:
    fam = pm.family
    rng = derive_rng(pm.seed, _FAMILY_TAG["gaussian"], _GLOBAL)
    mu = float(rng.uniform(fam.mu_a, fam.mu_b)) if fam.mu_b > fam.mu_a else float(fam.mu_a)
    sigma = float(rng.uniform(fam.sigma_min, fam.sigma_max)) if fam.sigma_max > fam.sigma_min else float(fam.sigma_min)
    return mu, sigma


def _sample_l1_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    # first dim coordinates of a flat Dirichlet are uniform on the positive simplex body
    body = rng.dirichlet(np.ones(dim + 1))[:dim]
    signs = rng.choice([-1.0, 1.0], size=dim)
    return radius * signs * body


@lru_cache(maxsize=100_000)
def _node_params(pm: ParamMap, node: int, parents: tuple[int, ...], position: int) -> NodeParams:
    fam = pm.family
    tag = _FAMILY_TAG[fam.kind]
    if fam.kind == "noisy_or":
        return NodeParams.noisy_or(fam.theta, parents)

    if fam.kind == "gaussian":
        mu, sigma = _gaussian_globals(pm)
        if not parents:
            return NodeParams.gaussian((), mu, sigma)
        if position < 2:
            raise DimensionError(f"有父节点的节点拓扑位置必须 ≥ 2：node={node}, position={position}")
        rng = derive_rng(pm.seed, tag, node, _mask(parents), position)
        direction = rng.normal(size=len(parents))
        direction /= np.linalg.norm(direction)
        radius = rng.uniform(0.0, 1.0 / math.sqrt(2 * (position - 1)))
        if fam.w_max is not None:
            radius = min(radius, fam.w_max)
        return NodeParams.gaussian(radius * direction, mu, sigma, parents)

    rng = derive_rng(pm.seed, tag, node, _mask(parents))
    if fam.kind == "logistic":
        if not parents:
            return NodeParams.logistic((), ())
        return NodeParams.logistic(_sample_l1_ball(rng, len(parents), fam.w_max_1), parents)

    v, theta_min = fam.v, fam.theta_min
    if v * theta_min > 1 + 1e-12:
        raise FeasibilityError(f"v·theta_min 必须 ≤ 1，当前 v={v}, theta_min={theta_min}")
    raw = rng.dirichlet(np.ones(v), size=v ** len(parents))
    table = theta_min + (1.0 - v * theta_min) * raw
    return NodeParams.cpt(table, parents)


def materialize(pm: ParamMap, g: Dag) -> BayesNet:
    """Θ(G): every node's conditional under the policy, plus each node's Q₀."""
    nodes = []
    roots = []
    for i in range(g.m):
        parents = g.parents_of(i)
        nodes.append(pm.node_params(i, parents, g.position(i) if parents else 1))
        roots.append(pm.root_params(i))
    return BayesNet(g, pm.family, tuple(nodes), tuple(roots))


# ---------- natural parameters ----------
def _row_index(table: np.ndarray, parent_values: np.ndarray) -> np.ndarray:
    """Mixed-radix row of a cpt table; first parent most significant. parent_values: (n, |π|)."""
    v = table.shape[1]
    if parent_values.shape[1] == 0:
        return np.zeros(parent_values.shape[0], dtype=int)
    radix = v ** np.arange(parent_values.shape[1] - 1, -1, -1)
    return parent_values.astype(int) @ radix


def natural_params_batch(model: FamilyModel, params: NodeParams, parent_values) -> np.ndarray:
    """η for every row of `parent_values` (shape (n, |π|)); returns (n, d)."""
    x = np.asarray(parent_values)
    if x.ndim == 1:
        x = x[None, :]
    k = params.n_parents
    if x.shape[1] != k:
        raise DimensionError(f"父节点取值维度 {x.shape[1]} 与父集大小 {k} 不一致")

    if model.kind == "cpt":
        rows = params.table[_row_index(params.table, x)]
        if np.any(rows <= 0):
            raise DomainError("条件概率表存在零概率单元，自然参数无定义")
        return np.log(rows)
    if model.kind == "gaussian":
        mean = x @ params.weights if k else np.full(x.shape[0], params.mu)
        return (mean / (params.sigma / math.sqrt(2.0)))[:, None]
    if model.kind == "noisy_or":
        theta = params.theta
        if k == 0:
            return np.full((x.shape[0], 1), math.log((1.0 - theta) / theta))
        fail = theta ** (1.0 + x.sum(axis=1) / k)
        return (np.log(fail) - np.log1p(-fail))[:, None]
    eta = x @ params.weights if k else np.zeros(x.shape[0])
    return eta[:, None]


def natural_param(model: FamilyModel, node_params: NodeParams, parent_values=()) -> np.ndarray:
    return natural_params_batch(model, node_params, np.asarray(parent_values, dtype=float).reshape(1, -1))[0]


def expected_suff_stat(model: FamilyModel, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if model.kind == "cpt":
        return softmax(eta, axis=-1)
    if model.kind == "gaussian":
        return eta.copy()
    return expit(eta)


def log_partition(model: FamilyModel, eta) -> np.ndarray:
    """ψ(η); the gradient of this is expected_suff_stat."""
    eta = np.asarray(eta, dtype=float)
    if model.kind == "cpt":
        return logsumexp(eta, axis=-1)
    if model.kind == "gaussian":
        return 0.5 * np.sum(eta**2, axis=-1)
    return np.sum(np.logaddexp(0.0, eta), axis=-1)


def _same_shape(eta1: np.ndarray, eta2: np.ndarray) -> None:
    if eta1.shape != eta2.shape:
        raise DimensionError(f"自然参数维度不一致：{eta1.shape} vs {eta2.shape}")


def delta_bound(model: FamilyModel, eta1, eta2) -> float:
    """Δ(η₁, η₂) = (η₁ − η₂)ᵀ(μ(η₁) − μ(η₂)), an upper bound on both KL directions."""
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    _same_shape(eta1, eta2)
    return float(np.sum((eta1 - eta2) * (expected_suff_stat(model, eta1) - expected_suff_stat(model, eta2)), axis=-1))


def _bernoulli(eta: np.ndarray) -> np.ndarray:
    p = expit(eta)
    return np.concatenate([1.0 - p, p], axis=-1)


def kl_exact(model: FamilyModel, eta1, eta2) -> float:
    """KL(P_η₁ ‖ P_η₂) for one node conditional, computed from the distributions directly."""
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    _same_shape(eta1, eta2)
    if model.kind == "gaussian":
        # equal variances σ²/2; in η units the means are already standardized
        return float(0.5 * np.sum((eta1 - eta2) ** 2))
    if model.kind == "cpt":
        p, q = softmax(eta1), softmax(eta2)
    elif model.kind in ("noisy_or", "logistic"):
        p, q = _bernoulli(eta1.reshape(-1)), _bernoulli(eta2.reshape(-1))
    else:
        raise DomainError(f"不支持的分布族：{model.kind}")
    return float(np.sum(rel_entr(p, q)))


# ---------- per-node conditionals ----------
def node_log_prob(bn: BayesNet, i: int, rows: np.ndarray) -> np.ndarray:
    """log P(x_i | x_π) for every row; out-of-support values give −inf."""
    params = bn.nodes[i]
    x = rows[:, i]
    pa = rows[:, list(params.parents)] if params.parents else np.zeros((rows.shape[0], 0))
    kind = bn.family.kind
    if kind == "gaussian":
        mean = pa @ params.weights if params.parents else np.full(rows.shape[0], params.mu)
        return norm.logpdf(x, loc=mean, scale=params.sigma / math.sqrt(2.0))

    support = bn.family.support
    xi = np.asarray(x).astype(int)
    valid = (xi >= 0) & (xi < support) & (np.asarray(x) == xi)
    pa_valid = np.all((pa >= 0) & (pa < support), axis=1) if params.parents else np.ones_like(valid)
    safe_pa = np.clip(pa, 0, support - 1)
    xi = np.clip(xi, 0, support - 1)
    if kind == "cpt":
        out = np.log(params.table[_row_index(params.table, safe_pa), xi])
    else:
        eta = natural_params_batch(bn.family, params, safe_pa)[:, 0]
        # statistic is 1[x=0] for noisy-OR, x for logistic
        stat = (xi == 0) if kind == "noisy_or" else (xi == 1)
        out = np.where(stat, -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta))
    return np.where(valid & pa_valid, out, -np.inf)


def node_success_prob(bn: BayesNet, i: int, rows: np.ndarray) -> np.ndarray:
    """P(X_i = 1 | x_π) for binary families."""
    params = bn.nodes[i]
    pa = rows[:, list(params.parents)] if params.parents else np.zeros((rows.shape[0], 0))
    eta = natural_params_batch(bn.family, params, pa)[:, 0]
    return expit(-eta) if bn.family.kind == "noisy_or" else expit(eta)


def forward_sample(bn: BayesNet, n: int, seed: int) -> Dataset:
    """n i.i.d. rows, each generated node by node in topological order."""
    if n < 0:
        raise DimensionError(f"样本数必须 ≥ 0：{n}")
    rng = derive_rng(seed)
    discrete = bn.family.is_discrete
    rows = np.zeros((n, bn.m), dtype=np.int64 if discrete else float)
    for i in bn.g.order:
        params = bn.nodes[i]
        kind = bn.family.kind
        if kind == "gaussian":
            pa = rows[:, list(params.parents)]
            mean = pa @ params.weights if params.parents else np.full(n, params.mu)
            rows[:, i] = mean + rng.normal(scale=params.sigma / math.sqrt(2.0), size=n)
        elif kind == "cpt":
            pa = rows[:, list(params.parents)] if params.parents else np.zeros((n, 0), dtype=int)
            probs = params.table[_row_index(params.table, pa)]
            u = rng.random(n)
            draws = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
            rows[:, i] = np.minimum(draws, probs.shape[1] - 1)
        else:
            p1 = node_success_prob(bn, i, rows)
            rows[:, i] = rng.random(n) < p1
    return Dataset(rows)


def joint_states(v: int, m: int) -> np.ndarray:
    """All v^m states, C order (last variable fastest)."""
    grids = np.indices((v,) * m).reshape(m, -1).T
    return grids.astype(np.int64)


def joint_distribution(bn: BayesNet) -> np.ndarray:
    """Exact product-of-conditionals table, shape (v,)*m."""
    if not bn.family.is_discrete:
        raise CapabilityError("连续分布族（gaussian）没有有限联合概率表")
    v = bn.family.support
    cap = int(limits()["max_joint_states"])
    if v**bn.m > cap:
        raise CapabilityError(f"联合状态数 {v}^{bn.m} 超过上限 {cap}")
    states = joint_states(v, bn.m)
    logp = np.zeros(states.shape[0])
    for i in range(bn.m):
        logp += node_log_prob(bn, i, states)
    mass = np.exp(logp)
    total = mass.sum()
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"联合分布未归一化：总质量 {total}")
    return mass.reshape((v,) * bn.m)


def log_likelihood(bn: BayesNet, data: Dataset) -> float:
    if data.m != bn.m:
        raise DimensionError(f"数据列数 {data.m} 与节点数 {bn.m} 不一致")
    if data.n == 0:
        return 0.0
    total = float(sum(node_log_prob(bn, i, data.rows).sum() for i in range(bn.m)))
    if total == -math.inf:
        logger.warning("dataset has zero mass under the model; log-likelihood is -inf")
    return total


# ---------- Δ expectations ----------
def _root(bn: BayesNet, i: int) -> NodeParams:
    if not bn.roots:
        raise DomainError("BayesNet 缺少空父集条件分布（请通过 materialize 构造）")
    return bn.roots[i]


def gaussian_moments(bn: BayesNet) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean vector and covariance, built node by node in topological order."""
    if bn.family.kind != "gaussian":
        raise DomainError(f"gaussian_moments 仅适用于 gaussian，当前 {bn.family.kind}")
    m = bn.m
    mean = np.zeros(m)
    cov = np.zeros((m, m))
    done: list[int] = []
    for i in bn.g.order:
        params = bn.nodes[i]
        var0 = params.sigma**2 / 2.0
        if not params.parents:
            mean[i] = params.mu
            cov[i, i] = var0
        else:
            pa = list(params.parents)
            w = params.weights
            mean[i] = w @ mean[pa]
            if done:
                cov[i, done] = w @ cov[np.ix_(pa, done)]
                cov[done, i] = cov[i, done]
            cov[i, i] = w @ cov[np.ix_(pa, pa)] @ w + var0
        done.append(i)
    return mean, cov


def expected_delta(bn: BayesNet, i: int, joint: Optional[np.ndarray] = None) -> float:
    """E over X_π of Δ(η_i, η₀), with η₀ the node's empty-parent conditional."""
    params = bn.nodes[i]
    if not params.parents:
        return 0.0
    family = bn.family
    root = _root(bn, i)
    if family.kind == "gaussian":
        mean, cov = gaussian_moments(bn)
        pa = list(params.parents)
        w = params.weights
        mu0 = root.mu
        bias = w @ mean[pa] - mu0
        return float(2.0 * (bias**2 + w @ cov[np.ix_(pa, pa)] @ w) / params.sigma**2)

    joint = (joint_distribution(bn) if joint is None else joint).reshape(-1)
    states = joint_states(family.support, bn.m)
    keep = joint > 0
    pa_vals = states[keep][:, list(params.parents)]
    eta = natural_params_batch(family, params, pa_vals)
    eta0 = natural_params_batch(family, root, np.zeros((1, 0)))[0]
    mu = expected_suff_stat(family, eta)
    mu0 = expected_suff_stat(family, eta0)
    deltas = np.sum((eta - eta0) * (mu - mu0), axis=1)
    return float(joint[keep] @ deltas)


def expected_kl_to_root(bn: BayesNet, i: int, joint: Optional[np.ndarray] = None) -> float:
    """E over X_π of KL(P_i(π) ‖ Q₀), exact for discrete families; Gaussian uses KL = Δ/2."""
    params = bn.nodes[i]
    if not params.parents:
        return 0.0
    family = bn.family
    if family.kind == "gaussian":
        return expected_delta(bn, i) / 2.0
    joint = (joint_distribution(bn) if joint is None else joint).reshape(-1)
    states = joint_states(family.support, bn.m)
    keep = joint > 0
    eta = natural_params_batch(family, params, states[keep][:, list(params.parents)])
    eta0 = natural_params_batch(family, _root(bn, i), np.zeros((1, 0)))[0]
    kls = np.array([kl_exact(family, e, eta0) for e in eta])
    return float(joint[keep] @ kls)


def normalization_ok(bn: BayesNet) -> bool:
    return abs(float(joint_distribution(bn).sum()) - 1.0) <= tolerance("normalization")


@lru_cache(maxsize=32)
def materialize_ensemble(pm: ParamMap, spec: EnsembleSpec) -> tuple[BayesNet, ...]:
    """Θ(G) for every ensemble member, in canonical index order."""
    return tuple(materialize(pm, g) for g in enumerate_ensemble(spec))
