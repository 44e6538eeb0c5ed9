# -*- coding: utf-8 -*-
"""Entropy and mutual information on finite joints, the Fano-extension checker, and I(S; G | Θ)."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import entr, logsumexp

from modules.bounds import certified_delta_max, fano_error_floor
from modules.common import (
    CapabilityError,
    DimensionError,
    DomainError,
    StructureError,
    default_workers,
    derive_rng,
    limits,
    tolerance,
)
from modules.ensembles import enumerate_ensemble
from modules.expfam import (
    ParamMap,
    expected_delta,
    expected_kl_to_root,
    forward_sample,
    joint_distribution,
    log_likelihood,
    materialize_ensemble,
)
from modules.models import EnsembleSpec, FanoCheck, FanoRun, MiReport


logger = logging.getLogger(__name__)

W, X, Y = 0, 1, 2


@dataclass(frozen=True, eq=False)
class FiniteJoint:
    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if np.any(mass < 0):
            raise DomainError("联合分布存在负概率")
        total = float(mass.sum())
        if abs(total - 1.0) > tolerance("normalization"):
            raise DomainError(f"联合分布未归一化：总质量 {total}")
        object.__setattr__(self, "mass", mass)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.mass.shape)

    def marginal(self, keep: Iterable[int]) -> np.ndarray:
        keep = sorted(set(keep))
        drop = tuple(a for a in range(self.mass.ndim) if a not in keep)
        return self.mass.sum(axis=drop) if drop else self.mass


def _axes(j: FiniteJoint, *groups: Iterable[int]) -> list[set[int]]:
    out = [set(int(a) for a in g) for g in groups]
    for g in out:
        if any(not 0 <= a < j.mass.ndim for a in g):
            raise DimensionError(f"变量下标越界：{sorted(g)}，维数 {j.mass.ndim}")
    for a in range(len(out)):
        for b in range(a + 1, len(out)):
            if out[a] & out[b]:
                raise DimensionError(f"变量集合必须两两不交：{sorted(out[a])} / {sorted(out[b])}")
    return out


def _h(p: np.ndarray) -> float:
    return float(entr(p).sum())


def entropy(j: FiniteJoint, vars: Iterable[int], given: Iterable[int] = ()) -> float:
    """H(vars | given) in nats."""
    vs, gs = _axes(j, vars, given)
    return _h(j.marginal(vs | gs)) - (_h(j.marginal(gs)) if gs else 0.0)


def mutual_information(j: FiniteJoint, a: Iterable[int], b: Iterable[int], given: Iterable[int] = ()) -> float:
    """I(a; b | given) = H(a | given) − H(a | b, given)."""
    sa, sb, sg = _axes(j, a, b, given)
    return entropy(j, sa, sg) - entropy(j, sa, sb | sg)


def fano_bound(mi: float, h: float) -> float:
    """1 − (I + ln 2)/H; may be negative."""
    if not h > 0:
        raise DomainError(f"熵必须 > 0：{h}")
    return fano_error_floor(h, mi)


# ---------- Fano extension ----------
def bayes_error(j: FiniteJoint) -> float:
    """P(X ≠ X̂(Y)) for the MAP estimator of X from Y alone."""
    pxy = j.marginal({X, Y})
    return float(1.0 - pxy.max(axis=0).sum())


def verify_fano_extension(j: FiniteJoint, independent: bool = False) -> FanoCheck:
    """Check both forms of the extended Fano inequality on a (W, X, Y) joint."""
    if j.mass.ndim != 3:
        raise DimensionError(f"需要 (W, X, Y) 三维联合分布，当前维数 {j.mass.ndim}")
    tol = tolerance("exact")
    if independent:
        pwx = j.marginal({W, X})
        outer = np.outer(pwx.sum(axis=1), pwx.sum(axis=0))
        if np.max(np.abs(pwx - outer)) > tol:
            raise StructureError("声明 W 与 X 独立，但联合分布不可分解")
    err = bayes_error(j)
    h = entropy(j, [X], [W])
    mi = mutual_information(j, [Y], [X], [W])
    bound = fano_bound(mi, h)
    out = dict(error=err, mi=mi, h=h, bound=bound, holds=err >= bound - tol)
    if independent:
        pw = j.marginal({W})
        sup_mi = 0.0
        for w in range(j.dims[W]):
            if pw[w] <= 0:
                continue
            sup_mi = max(sup_mi, mutual_information(FiniteJoint(j.mass[w:w + 1] / pw[w]), [Y], [X]))
        bound_sup = fano_bound(sup_mi, entropy(j, [X]))
        out.update(bound_sup=bound_sup, holds_sup=err >= bound_sup - tol)
    return FanoCheck(**out)


def random_fano_joint(rng: np.random.Generator, independent: bool) -> FiniteJoint:
    """
    Random (W, X, Y) model with Y depending on both W and X.

    X is uniform given W, over a w-dependent support of fixed size when W → X;
    the extended inequality needs X | W uniform (a skewed prior breaks it).
    """
    nw = int(rng.integers(1, 4))
    nx = int(rng.integers(2, 6))
    ny = int(rng.integers(2, 6))
    pw = rng.dirichlet(np.ones(nw))
    px_w = np.zeros((nw, nx))
    if independent:
        px_w[:] = 1.0 / nx
    else:
        size = int(rng.integers(2, nx + 1))
        for w in range(nw):
            px_w[w, rng.choice(nx, size=size, replace=False)] = 1.0 / size
    alpha = float(rng.choice([0.2, 1.0, 5.0]))
    py_wx = rng.dirichlet(np.full(ny, alpha), size=(nw, nx))
    mass = pw[:, None, None] * px_w[:, :, None] * py_wx
    return FiniteJoint(mass / mass.sum())


def fano_property_run(trials: int, seed: int) -> FanoRun:
    violations = violations_sup = 0
    min_slack = math.inf
    failures = []
    for t in range(trials):
        rng = derive_rng(seed, t)
        independent = bool(t % 2)
        check = verify_fano_extension(random_fano_joint(rng, independent), independent)
        min_slack = min(min_slack, check.error - check.bound)
        if not check.holds:
            violations += 1
        if check.holds_sup is False:
            violations_sup += 1
        if not check.holds or check.holds_sup is False:
            failures.append(check)
    return FanoRun(
        trials=trials,
        seed=seed,
        violations=violations,
        violations_sup=violations_sup,
        min_slack=0.0 if min_slack == math.inf else min_slack,
        failures=tuple(failures[:10]),
    )


# ---------- I(S; G | Θ) ----------
def _require_discrete(pm: ParamMap) -> None:
    if not pm.family.is_discrete:
        raise CapabilityError("数据-结构互信息只对离散分布族计算（gaussian 仅给出 Δ 形式上界）")


def dataset_log_likelihoods(spec: EnsembleSpec, pm: ParamMap, n: int) -> np.ndarray:
    """log P(S | G, Θ) for every member G (rows) and every length-n dataset S (columns)."""
    _require_discrete(pm)
    if n < 0:
        raise DimensionError(f"样本数必须 ≥ 0：{n}")
    members = enumerate_ensemble(spec)
    v = pm.family.support
    work = len(members) * v ** (spec.m * n)
    cap = int(limits()["max_mi_work"])
    if work > cap:
        raise CapabilityError(f"精确互信息需要枚举 {work} 项，超过上限 {cap}")
    rows = []
    for bn in materialize_ensemble(pm, spec):
        logp = np.log(joint_distribution(bn).reshape(-1))
        total = np.zeros(1)
        for _ in range(n):
            total = (total[:, None] + logp[None, :]).reshape(-1)
        rows.append(total)
    return np.vstack(rows)


def _mi_from_loglik(table: np.ndarray) -> float:
    n_graphs = table.shape[0]
    mixture = logsumexp(table, axis=0) - math.log(n_graphs)
    terms = np.exp(table) * (table - mixture[None, :])
    return max(float(terms.sum()) / n_graphs, 0.0)


def mi_upper_bound(spec: EnsembleSpec, pm: ParamMap, n: int) -> float:
    """
    (n/|G|) Σ_G Σ_i E[KL(P_i(π_i(G)) ‖ Q₀)] at the given Θ; layered ensembles use
    (m − m_l) n / |G| · Σ_G max_i E[KL]. Gaussian nets use the Δ form of each term.
    """
    nets = materialize_ensemble(pm, spec)
    per_graph = []
    for bn in nets:
        if pm.family.is_discrete:
            joint = joint_distribution(bn)
            terms = [expected_kl_to_root(bn, i, joint) for i in range(bn.m)]
        else:
            terms = [expected_delta(bn, i) for i in range(bn.m)]
        if spec.is_layered:
            upper_nodes = spec.m - spec.layers[-1]
            per_graph.append(upper_nodes * max(terms[:upper_nodes], default=0.0))
        else:
            per_graph.append(sum(terms))
    return n * float(np.mean(per_graph))


def _report(spec: EnsembleSpec, pm: ParamMap, n: int, estimate: float, **extra) -> MiReport:
    return MiReport(
        exact_or_estimate=estimate,
        upper_bound_kl=mi_upper_bound(spec, pm, n),
        upper_bound_assumption=n * spec.m * certified_delta_max(pm.family),
        **extra,
    )


def mi_exact(spec: EnsembleSpec, pm: ParamMap, n: int) -> MiReport:
    """I(S; G | Θ) = (1/|G|) Σ_G KL(P_{S|G} ‖ mixture) over every length-n dataset."""
    if n == 0:
        _require_discrete(pm)
        return _report(spec, pm, n, 0.0)
    return _report(spec, pm, n, _mi_from_loglik(dataset_log_likelihoods(spec, pm, n)))


def _mc_trial(spec: EnsembleSpec, pm: ParamMap, n: int, seed: int, t: int) -> float:
    nets = materialize_ensemble(pm, spec)
    rng = derive_rng(seed, t)
    idx = int(rng.integers(0, len(nets)))
    data = forward_sample(nets[idx], n, int(rng.integers(0, 2**32)))
    loglik = np.array([log_likelihood(bn, data) for bn in nets])
    return float(loglik[idx] - (logsumexp(loglik) - math.log(len(nets))))


def mi_monte_carlo(
    spec: EnsembleSpec, pm: ParamMap, n: int, trials: int, seed: int, workers: Optional[int] = None
) -> MiReport:
    """Sample (G, S); exact log P(S|G') over the whole ensemble gives each term."""
    _require_discrete(pm)
    if trials < 1:
        raise DimensionError(f"trials 必须 ≥ 1：{trials}")
    materialize_ensemble(pm, spec)
    workers = workers or default_workers()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        values = np.array(list(pool.map(lambda t: _mc_trial(spec, pm, n, seed, t), range(trials))))
    logger.debug("mi_monte_carlo %s n=%d trials=%d", spec.label(), n, trials)
    unreliable = trials < 2
    std_error = 0.0 if unreliable else float(values.std(ddof=1) / math.sqrt(trials))
    return _report(
        spec,
        pm,
        n,
        float(values.mean()),
        std_error=std_error,
        exact=False,
        trials=trials,
        unreliable=unreliable,
    )


def joint_over_graph_and_data(spec: EnsembleSpec, pm: ParamMap, n: int) -> FiniteJoint:
    """Uniform prior over G times P(S | G); axes (G, S)."""
    table = dataset_log_likelihoods(spec, pm, n)
    return FiniteJoint(np.exp(table) / table.shape[0])