# -*- coding: utf-8 -*-
"""Validated value types shared by the library, the CLI and the API."""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from modules.common import load_config


EnsembleKind = Literal["restricted_all", "restricted_sparse", "layered_all", "layered_sparse"]
FamilyKind = Literal["cpt", "gaussian", "noisy_or", "logistic"]
DecoderKind = Literal["oracle_bayes", "max_likelihood", "bic"]


class FiniteModel(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False, frozen=True, extra="forbid")


class EnsembleSpec(FiniteModel):
    kind: EnsembleKind
    m: int = Field(..., ge=1, description="total node count")
    k: Optional[int] = Field(None, description="max in-degree, *_sparse only")
    layers: Optional[tuple[int, ...]] = Field(
        None, description="layer sizes m_1..m_l; parents of layer i sit in layer i+1"
    )

    @model_validator(mode="before")
    @classmethod
    def _fill_m(cls, data):
        if isinstance(data, dict) and data.get("m") is None and data.get("layers"):
            data = dict(data)
            data["m"] = sum(int(v) for v in data["layers"])
        return data

    @model_validator(mode="after")
    def _check(self):
        if self.kind.endswith("_sparse"):
            if self.k is None:
                raise ValueError(f"{self.kind} 需要 k")
            if not 1 <= self.k < self.m:
                raise ValueError(f"k 必须满足 1 ≤ k < m，当前 k={self.k}, m={self.m}")
        elif self.k is not None:
            raise ValueError(f"{self.kind} 不接受 k")
        if self.kind.startswith("layered"):
            if not self.layers:
                raise ValueError(f"{self.kind} 需要 layers")
            if any(size < 1 for size in self.layers):
                raise ValueError(f"每层节点数必须 ≥ 1：{self.layers}")
            if sum(self.layers) != self.m:
                raise ValueError(f"层大小之和 {sum(self.layers)} 与 m={self.m} 不一致")
        elif self.layers is not None:
            raise ValueError(f"{self.kind} 不接受 layers")
        return self

    @property
    def is_layered(self) -> bool:
        return self.kind.startswith("layered")

    @property
    def is_sparse(self) -> bool:
        return self.kind.endswith("_sparse")

    def layer_of(self) -> list[int]:
        """Layer index (0-based) of every node; nodes are numbered layer by layer."""
        out: list[int] = []
        for idx, size in enumerate(self.layers or ()):
            out.extend([idx] * size)
        return out

    def label(self) -> str:
        if self.is_layered:
            base = f"{self.kind}[{','.join(str(v) for v in self.layers)}]"
        else:
            base = f"{self.kind}(m={self.m})"
        return base if self.k is None else f"{base},k={self.k}"


class FamilyModel(FiniteModel):
    kind: FamilyKind
    v: int = Field(2, ge=2, description="cpt support size")
    theta_min: float = Field(0.3, gt=0, lt=1, description="cpt minimum cell probability")
    mu_a: float = 0.0
    mu_b: float = 0.0
    sigma_min: float = Field(1.0, gt=0)
    sigma_max: float = Field(2.0, gt=0)
    w_max: Optional[float] = Field(
        None, gt=0, description="gaussian ℓ2 weight bound override; None → 1/√2 from the ball radii"
    )
    theta: float = Field(0.7, gt=0, lt=1, description="noisy-OR failure probability")
    w_max_1: float = Field(1.0, gt=0, description="logistic ℓ1 weight bound")

    @model_validator(mode="after")
    def _check(self):
        if self.mu_a > self.mu_b:
            raise ValueError(f"mu_a={self.mu_a} 不能大于 mu_b={self.mu_b}")
        if self.sigma_min > self.sigma_max:
            raise ValueError(f"sigma_min={self.sigma_min} 不能大于 sigma_max={self.sigma_max}")
        return self

    @classmethod
    def from_config(cls, kind: str, **overrides) -> "FamilyModel":
        defaults = dict(load_config()["families"].get(kind, {}))
        defaults.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind=kind, **defaults)

    @property
    def support(self) -> int:
        if self.kind == "cpt":
            return self.v
        if self.kind == "gaussian":
            raise ValueError("gaussian 为连续分布，没有有限支撑")
        return 2

    @property
    def is_discrete(self) -> bool:
        return self.kind != "gaussian"

    def hyper(self) -> dict:
        keys = {
            "cpt": ("v", "theta_min"),
            "gaussian": ("mu_a", "mu_b", "sigma_min", "sigma_max", "w_max"),
            "noisy_or": ("theta",),
            "logistic": ("w_max_1",),
        }[self.kind]
        return {key: getattr(self, key) for key in keys}


class BoundReport(FiniteModel):
    ensemble: EnsembleSpec
    family: Optional[FamilyModel] = None
    delta_max: float
    log_size_lb: float
    threshold_L: float = Field(..., description="raw, unclamped; may be ≤ 0")
    fano_L: float = Field(..., description="Fano rearrangement with the same log-size bound")
    vacuous: bool
    R: Optional[float] = None
    delta_certified: Optional[float] = Field(
        None, description="sup of E[Δ] under the parameter policy; None when no family is attached"
    )
    notes: tuple[str, ...] = ()

    @property
    def certified_L(self) -> float:
        """The smaller of the printed and rearranged thresholds, rescaled to delta_certified when that is larger."""
        raw = min(self.threshold_L, self.fano_L)
        if self.delta_certified is None or self.delta_certified <= self.delta_max:
            return raw
        return raw * self.delta_max / self.delta_certified


class MiReport(FiniteModel):
    exact_or_estimate: float
    std_error: float = 0.0
    upper_bound_kl: float
    upper_bound_assumption: float
    exact: bool = True
    trials: int = 0
    unreliable: bool = False


class FanoCheck(FiniteModel):
    error: float = Field(..., description="Bayes error of the best estimator X̂(Y)")
    mi: float
    h: float
    bound: float
    holds: bool
    bound_sup: Optional[float] = Field(None, description="independent-W form, sup over w")
    holds_sup: Optional[bool] = None


class FanoRun(FiniteModel):
    trials: int
    seed: int
    violations: int
    violations_sup: int
    min_slack: float
    failures: tuple[FanoCheck, ...] = ()


class KlRun(FiniteModel):
    family: FamilyKind
    trials: int
    seed: int
    violations: int
    max_kl: float
    max_ratio: float = Field(..., description="max KL/Δ over pairs with Δ > 0")


class NPoint(FiniteModel):
    n: int
    trials: int
    failures: int
    error_rate: float = Field(..., ge=0, le=1)
    std_error: float
    wilson_ci_low: float
    wilson_ci_high: float
    fano_floor: Optional[float] = None


class ExperimentConfig(FiniteModel):
    ensemble: EnsembleSpec
    family: FamilyModel
    param_seed: int = Field(0, ge=0)
    data_seed: int = Field(0, ge=0)
    n_grid: tuple[int, ...] = Field(..., min_length=1)
    trials: int = Field(..., ge=100, description="per grid point; ≥ 100 for Wilson CI validity")
    decoder: DecoderKind = "oracle_bayes"

    @model_validator(mode="after")
    def _check(self):
        if any(n < 0 for n in self.n_grid):
            raise ValueError(f"n_grid 不能含负数：{self.n_grid}")
        return self


class ExperimentResult(FiniteModel):
    schema_version: int = Field(1, alias="schema", serialization_alias="schema")
    config: ExperimentConfig
    decoder: DecoderKind
    points: tuple[NPoint, ...]
    threshold_L: Optional[float] = None
    fano_L: Optional[float] = None
    theoretical_floor: float = 0.5
    ensemble_size: int
    notes: tuple[str, ...] = ()
    timestamp: str = ""

    model_config = ConfigDict(
        allow_inf_nan=False, frozen=True, extra="forbid", populate_by_name=True
    )


class ThresholdVerdict(FiniteModel):
    status: Literal["PASS", "FAIL", "SKIPPED"]
    checked_n: tuple[int, ...] = ()
    threshold_L: Optional[float] = None
    certified_L: Optional[float] = None
    theta_min_selected: Optional[float] = None
    diagnostics: tuple[str, ...] = ()
    result: Optional[ExperimentResult] = None
