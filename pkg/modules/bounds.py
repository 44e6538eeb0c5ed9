# -*- coding: utf-8 -*-
"""
Closed-form Δ_max per family and the sample-count thresholds L(·).

Two thresholds are reported for every ensemble:
  threshold_L  the displayed formula for that ensemble, evaluated as written
  fano_L       (ln|G|_lb / 2 − ln 2) / (m' Δ), the Fano rearrangement with the same
               log-size lower bound (m' = m, or m − m_l for layered ensembles)
They coincide except for restricted_all, where the displayed formula is twice the
rearrangement. When a family is attached, certified_delta_max gives the supremum of E[Δ]
over the parameters the sampling policy actually produces; for the Gaussian and noisy-OR
families it exceeds the displayed closed form and certified_L is rescaled accordingly.
"""

import math
from typing import Iterable, Optional

from scipy.special import gammaln

from modules.common import LN2, DomainError, UsageError
from modules.ensembles import log_size_lower_bound
from modules.models import BoundReport, EnsembleSpec, FamilyModel


GAUSSIAN_W_MAX = 1.0 / math.sqrt(2.0)

_NOTES = {
    "restricted_all": "displayed L(G̃_m) equals twice the Fano rearrangement of the restricted log-size bound",
    "restricted_sparse": (
        "displayed L(G̃_{m,k}) carries {k(k−3)/2 − 1}·ln2 where the log-size bound has +1; "
        "the difference, 2·ln2/(2mΔ), is the −2·ln2 of the Fano rearrangement"
    ),
}


def delta_max(family: FamilyModel) -> float:
    """Displayed closed-form Δ_max for the family, in nats."""
    if family.kind == "cpt":
        return 4.0 * math.log(1.0 / family.theta_min)
    if family.kind == "gaussian":
        mu_max = max(abs(family.mu_a), abs(family.mu_b))
        w_max = family.w_max if family.w_max is not None else GAUSSIAN_W_MAX
        return 1.0 + 2.0 * mu_max**2 * (w_max**2 + 1.0) / family.sigma_min**2
    if family.kind == "noisy_or":
        theta = family.theta
        if not 0.0 < theta < 1.0:
            raise DomainError(f"noisy-OR 的 θ 必须在 (0,1) 内：{theta}")
        return 2.0 * abs(math.log(theta / (1.0 - theta)))
    return family.w_max_1 / 2.0


def _noisy_or_delta(theta: float, fail: float) -> float:
    # Δ against the root law B(θ): η₀ = −logit θ, μ₀ = 1 − θ
    return (math.log(fail / (1.0 - fail)) + math.log(theta / (1.0 - theta))) * (fail + theta - 1.0)


def certified_delta_max(family: FamilyModel) -> float:
    """sup of E[Δ(η_i, η₀)] over the parameters the sampling policy can produce.

    cpt and logistic coincide with the displayed forms. For the Gaussian family every
    mean stays within μ_max because ‖w‖₁ ≤ √(t−1)·‖w‖₂ ≤ 1/√2, so the bias term is at most
    (1 + 1/√2)·μ_max and the variance term at most σ²/2. For noisy-OR the child failure
    probability ranges over [θ², θ] and Δ is monotone on either side of 1 − θ, so the
    supremum sits at an endpoint.
    """
    if family.kind == "gaussian":
        mu_max = max(abs(family.mu_a), abs(family.mu_b))
        return 1.0 + 2.0 * (1.0 + GAUSSIAN_W_MAX) ** 2 * mu_max**2 / family.sigma_min**2
    if family.kind == "noisy_or":
        theta = family.theta
        if not 0.0 < theta < 1.0:
            raise DomainError(f"noisy-OR 的 θ 必须在 (0,1) 内：{theta}")
        return max(_noisy_or_delta(theta, theta), _noisy_or_delta(theta, theta**2))
    return delta_max(family)


def _check_delta(delta: float, family: Optional[FamilyModel] = None) -> None:
    if not delta > 0:
        hint = ""
        if family is not None and family.kind == "noisy_or":
            hint = "（noisy-OR 在 θ = 1/2 时 Δ_max = 0，阈值无定义）"
        raise DomainError(f"Δ_max 必须 > 0，当前 {delta}{hint}")


def _effective_m(spec: EnsembleSpec) -> int:
    m_eff = spec.m - spec.layers[-1] if spec.is_layered else spec.m
    if m_eff <= 0:
        raise DomainError(f"{spec.label()} 只有一层，集合只含空图，阈值无定义")
    return m_eff


def fano_error_floor(log_size: float, mi: float) -> float:
    """1 − (I + ln 2) / ln|G|, the finite-n error floor for a uniform prior."""
    if not log_size > 0:
        raise DomainError(f"ln|G| 必须 > 0：{log_size}")
    return 1.0 - (mi + LN2) / log_size


def fano_threshold(spec: EnsembleSpec, delta: float) -> float:
    _check_delta(delta)
    return (log_size_lower_bound(spec) / 2.0 - LN2) / (_effective_m(spec) * delta)


def _printed_threshold(spec: EnsembleSpec, delta: float) -> float:
    m, k = spec.m, spec.k
    if spec.kind == "restricted_all":
        return (LN2 / delta) * ((m - 3) / 2.0 - 1.0 / m)
    if spec.kind == "restricted_sparse":
        core = gammaln(m - 1) - gammaln(k + 1) - (m - k - 2) * math.log(k)
        return float((k * core + (k * (k - 3) / 2.0 - 1.0) * LN2) / (2.0 * m * delta))
    pairs = list(zip(spec.layers[:-1], spec.layers[1:]))
    m_eff = _effective_m(spec)
    if spec.kind == "layered_all":
        return LN2 * (sum(below * above for below, above in pairs) - 2) / (2.0 * m_eff * delta)
    core = k * sum(below * math.log(above / k) for below, above in pairs)
    return (core - 2.0 * LN2) / (2.0 * m_eff * delta)


def _certified_notes(delta: float, family: Optional[FamilyModel], notes: list) -> Optional[float]:
    if family is None:
        return None
    certified = certified_delta_max(family)
    if certified > delta:
        notes.append(f"E[Δ] under the parameter policy reaches {certified:.6g} > Δ = {delta:.6g}; certified_L is rescaled")
    return certified


def threshold(ensemble: EnsembleSpec, delta: float, family: Optional[FamilyModel] = None) -> BoundReport:
    _check_delta(delta, family)
    _effective_m(ensemble)
    raw = _printed_threshold(ensemble, delta)
    notes = [_NOTES[ensemble.kind]] if ensemble.kind in _NOTES else []
    if raw <= 0:
        notes.append("threshold ≤ 0: the bound is vacuous at this size")
    certified = _certified_notes(delta, family, notes)
    return BoundReport(
        ensemble=ensemble,
        family=family,
        delta_max=delta,
        log_size_lb=log_size_lower_bound(ensemble),
        threshold_L=raw,
        fano_L=fano_threshold(ensemble, delta),
        vacuous=raw <= 0,
        delta_certified=certified,
        notes=tuple(notes),
    )


def bound_for(ensemble: EnsembleSpec, family: FamilyModel) -> BoundReport:
    return threshold(ensemble, delta_max(family), family)


def remainder_R(m: int, k: int) -> float:
    """R(m,k) = (k/m){(m−2) + 2 ln(m−2) + ln k! + (m−k−2) ln k} + ln2/m."""
    return (k / m) * ((m - 2) + 2 * math.log(m - 2) + float(gammaln(k + 1)) + (m - k - 2) * math.log(k)) + LN2 / m


def threshold_corollary(
    m: int, k: Optional[int], delta: float, family: Optional[FamilyModel] = None
) -> BoundReport:
    if k is None:
        if m < 1:
            raise DomainError(f"m 必须 ≥ 1：{m}")
        return threshold(EnsembleSpec(kind="restricted_all", m=m), delta, family)
    if k < 1 or k >= m or m < 3:
        raise DomainError(f"稀疏推论要求 m ≥ 3 且 1 ≤ k < m，当前 m={m}, k={k}")
    _check_delta(delta, family)
    spec = EnsembleSpec(kind="restricted_sparse", m=m, k=k)
    R = remainder_R(m, k)
    raw = (k * math.log(m - 2) + k * (k - 3) * LN2 / (2.0 * m) - R) / (2.0 * delta)
    log_lb = float(k * (gammaln(m - 1) - (m - k - 2) * math.log(k) - gammaln(k + 1)) + (k * (k - 3) / 2 + 1) * LN2)
    notes = ["sparse corollary form with remainder R(m,k)"]
    if raw <= 0:
        notes.append("threshold ≤ 0: the bound is vacuous at this size")
    certified = _certified_notes(delta, family, notes)
    return BoundReport(
        ensemble=spec,
        family=family,
        delta_max=delta,
        log_size_lb=log_lb,
        threshold_L=raw,
        fano_L=(log_lb / 2.0 - LN2) / (m * delta),
        vacuous=raw <= 0,
        R=R,
        delta_certified=certified,
        notes=tuple(notes),
    )


FAMILY_ORDER = ("cpt", "gaussian", "noisy_or", "logistic")


def table1(m: int, k: int, families: Optional[Iterable[FamilyModel]] = None) -> dict[str, dict[str, BoundReport]]:
    """Family × {non_sparse, sparse} grid of corollary thresholds."""
    by_kind = {f.kind: f for f in (families or ())}
    out: dict[str, dict[str, BoundReport]] = {}
    for kind in FAMILY_ORDER:
        family = by_kind.get(kind) or FamilyModel.from_config(kind)
        delta = delta_max(family)
        out[kind] = {
            "non_sparse": threshold_corollary(m, None, delta, family),
            "sparse": threshold_corollary(m, k, delta, family),
        }
    return out


def linear_regression_limits(m: int, k: int, family: FamilyModel) -> dict[str, BoundReport]:
    """Two-layer instance: m − 1 candidate regressors above a single response."""
    if family.kind not in ("gaussian", "logistic"):
        raise UsageError(f"回归极限仅适用于 gaussian / logistic，当前 {family.kind}")
    if m < 2 or not 1 <= k <= m - 1:
        raise DomainError(f"回归极限要求 m ≥ 2 且 1 ≤ k ≤ m − 1，当前 m={m}, k={k}")
    delta = delta_max(family)
    dense = EnsembleSpec(kind="layered_all", layers=(1, m - 1))
    sparse = EnsembleSpec(kind="layered_sparse", layers=(1, m - 1), k=k)
    return {
        "dense": threshold(dense, delta, family),
        "sparse": threshold(sparse, delta, family),
    }
