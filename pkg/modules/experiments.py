# -*- coding: utf-8 -*-
"""
Empirical Fano harness: draw G uniformly, sample data from Θ(G), decode, count failures.

Every trial has its own generator derived from (data_seed, n, trial), so results do not
depend on the worker count or on scheduling order.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from modules.bounds import bound_for, fano_error_floor
from modules.common import (
    CapabilityError,
    DomainError,
    UsageError,
    default_workers,
    derive_rng,
    load_config,
    tolerance,
)
from modules.dag_core import markov_equivalent
from modules.decoders import Decoder, decode_index
from modules.ensembles import enumerate_ensemble
from modules.expfam import (
    ParamMap,
    delta_bound,
    forward_sample,
    kl_exact,
    materialize_ensemble,
)
from modules.infotheory import mi_upper_bound
from modules.models import (
    EnsembleSpec,
    ExperimentConfig,
    ExperimentResult,
    FamilyModel,
    KlRun,
    NPoint,
    ThresholdVerdict,
)


logger = logging.getLogger(__name__)

SCHEMA_VERSION = int(load_config()["experiments"]["schema"])

_ENSEMBLE_KEYS = {"m", "k", "layers"}
_FAMILY_KEYS = {"v", "theta_min", "mu_a", "mu_b", "sigma_min", "sigma_max", "w_max", "theta", "w_max_1"}
_RUN_KEYS = {"param_seed", "data_seed", "n_grid", "trials", "decoder"}


# ---------- error curve ----------
def wilson_interval(failures: int, trials: int) -> tuple[float, float]:
    ci = binomtest(failures, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _trial(cfg: ExperimentConfig, d: Decoder, pm: ParamMap, n: int, t: int) -> bool:
    members = enumerate_ensemble(cfg.ensemble)
    nets = materialize_ensemble(pm, cfg.ensemble)
    rng = derive_rng(cfg.data_seed, n, t)
    truth = int(rng.integers(0, len(members)))
    data = forward_sample(nets[truth], n, int(rng.integers(0, 2**32)))
    guess = decode_index(d, data, cfg.ensemble, pm)
    return not markov_equivalent(members[guess], members[truth])


def _fano_floor(cfg: ExperimentConfig, pm: ParamMap, n: int, size: int) -> Optional[float]:
    if size <= 1:
        return None
    try:
        return fano_error_floor(math.log(size), mi_upper_bound(cfg.ensemble, pm, n))
    except CapabilityError:
        return None


def _thresholds(cfg: ExperimentConfig) -> tuple[Optional[float], Optional[float], list[str]]:
    try:
        report = bound_for(cfg.ensemble, cfg.family)
    except DomainError as exc:
        return None, None, [f"threshold undefined: {exc}"]
    return report.threshold_L, report.fano_L, list(report.notes)


def run_error_curve(
    cfg: ExperimentConfig, d: Optional[Decoder] = None, workers: Optional[int] = None
) -> ExperimentResult:
    """Empirical P(ψ(S) ∉ [G]) with Wilson 95% intervals at every n in the grid."""
    d = d or Decoder(cfg.decoder)
    pm = ParamMap(cfg.family, cfg.param_seed)
    members = enumerate_ensemble(cfg.ensemble)
    materialize_ensemble(pm, cfg.ensemble)
    workers = max(1, workers or default_workers())

    points = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for n in cfg.n_grid:
            outcomes = list(pool.map(lambda t: _trial(cfg, d, pm, n, t), range(cfg.trials)))
            failures = int(sum(outcomes))
            rate = failures / cfg.trials
            low, high = wilson_interval(failures, cfg.trials)
            points.append(
                NPoint(
                    n=n,
                    trials=cfg.trials,
                    failures=failures,
                    error_rate=rate,
                    std_error=math.sqrt(rate * (1.0 - rate) / cfg.trials),
                    wilson_ci_low=low,
                    wilson_ci_high=high,
                    fano_floor=_fano_floor(cfg, pm, n, len(members)),
                )
            )
            logger.debug("%s n=%d error=%.4f", cfg.ensemble.label(), n, rate)

    threshold_L, fano_L, notes = _thresholds(cfg)
    return ExperimentResult(
        schema_version=SCHEMA_VERSION,
        config=cfg,
        decoder=d.kind,
        points=tuple(points),
        threshold_L=threshold_L,
        fano_L=fano_L,
        ensemble_size=len(members),
        notes=tuple(notes),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def n_zero_error(spec: EnsembleSpec) -> float:
    """Exact error at n = 0: every score ties, so the decoder always returns index 0."""
    members = enumerate_ensemble(spec)
    hits = sum(markov_equivalent(members[0], g) for g in members)
    return 1.0 - hits / len(members)


# ---------- threshold verification ----------
def select_theta_min(
    spec: EnsembleSpec, family: FamilyModel, target: float = 1.0, step: Optional[float] = None
) -> tuple[float, float, bool]:
    """
    Raise a cpt family's θ_min from its current value toward 1/v until the certified
    threshold reaches `target`. Returns (θ_min, certified L at that θ_min, reached).
    When the target is unreachable the last value tried is the cap 1/v.
    """
    if family.kind != "cpt":
        raise UsageError(f"θ_min 只属于 cpt 分布族，当前 {family.kind}")
    step = step or float(load_config()["experiments"]["theta_min_step"])
    cap = 1.0 / family.v
    theta = family.theta_min
    while True:
        candidate = family.model_copy(update={"theta_min": theta})
        certified = bound_for(spec, candidate).certified_L
        if certified >= target:
            return theta, certified, True
        if theta >= cap - 1e-12:
            return theta, certified, False
        theta = min(theta + step, cap)


def verify_threshold(
    cfg: ExperimentConfig, d: Optional[Decoder] = None, workers: Optional[int] = None
) -> ThresholdVerdict:
    """
    PASS iff error + 2·SE ≥ 1/2 at every grid point n ≤ ⌊L⌋, where L is the smaller of
    the printed and Fano-rearranged thresholds. Points above L are informational.
    """
    size = len(enumerate_ensemble(cfg.ensemble))
    if size <= 1:
        return ThresholdVerdict(status="SKIPPED", diagnostics=("ensemble has one member; L is undefined",))
    try:
        report = bound_for(cfg.ensemble, cfg.family)
    except DomainError as exc:
        return ThresholdVerdict(status="SKIPPED", diagnostics=(f"threshold undefined: {exc}",))

    diagnostics = []
    selected = None
    if report.certified_L < 1.0 and cfg.family.kind == "cpt":
        theta, certified, reached = select_theta_min(cfg.ensemble, cfg.family)
        if reached:
            selected = theta
            cfg = cfg.model_copy(update={"family": cfg.family.model_copy(update={"theta_min": theta})})
            report = bound_for(cfg.ensemble, cfg.family)
            diagnostics.append(f"theta_min raised to {theta:.4f}; certified L = {certified:.4f}")
        else:
            diagnostics.append(
                f"L ≥ 1 unreachable for theta_min ≤ 1/v (max certified L {certified:.4f}); "
                f"keeping theta_min = {cfg.family.theta_min}"
            )

    certified_L = report.certified_L
    if certified_L <= 0:
        diagnostics.append(f"threshold vacuous (L = {certified_L:.4f})")
        return ThresholdVerdict(
            status="SKIPPED",
            threshold_L=report.threshold_L,
            certified_L=certified_L,
            theta_min_selected=selected,
            diagnostics=tuple(diagnostics),
        )

    limit = math.floor(certified_L)
    checked = tuple(n for n in cfg.n_grid if n <= limit)
    if not checked:
        diagnostics.append(f"no grid point at or below floor(L) = {limit}")
        return ThresholdVerdict(
            status="SKIPPED",
            threshold_L=report.threshold_L,
            certified_L=certified_L,
            theta_min_selected=selected,
            diagnostics=tuple(diagnostics),
        )

    result = run_error_curve(cfg, d, workers)
    status = "PASS"
    for point in result.points:
        if point.n > limit:
            diagnostics.append(f"n={point.n} above L: no theoretical claim (error {point.error_rate:.4f})")
        elif point.error_rate + 2.0 * point.std_error < 0.5:
            status = "FAIL"
            diagnostics.append(f"n={point.n}: error {point.error_rate:.4f} + 2·SE < 0.5")
    return ThresholdVerdict(
        status=status,
        checked_n=checked,
        threshold_L=report.threshold_L,
        certified_L=certified_L,
        theta_min_selected=selected,
        diagnostics=tuple(diagnostics),
        result=result,
    )


# ---------- persistence ----------
def result_payload(result: ExperimentResult) -> dict:
    return result.model_dump(mode="json", by_alias=True)


def result_json(result: ExperimentResult, with_timestamp: bool = True) -> str:
    payload = result_payload(result)
    if not with_timestamp:
        payload.pop("timestamp", None)
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)


def result_frame(result: ExperimentResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "n": p.n,
                "error": p.error_rate,
                "ci_low": p.wilson_ci_low,
                "ci_high": p.wilson_ci_high,
                "threshold": result.threshold_L,
            }
            for p in result.points
        ],
        columns=["n", "error", "ci_low", "ci_high", "threshold"],
    )


def persist(result: ExperimentResult, path: Union[str, Path]) -> tuple[Path, Path]:
    """Write `<path>` (JSON) and its `.csv` companion; returns both paths."""
    json_path = Path(path)
    csv_path = json_path.with_suffix(".csv")
    try:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(result_json(result) + "\n", encoding="utf-8")
        result_frame(result).to_csv(csv_path, index=False, encoding="utf-8-sig")
    except OSError as exc:
        raise OSError(f"结果写入失败：{json_path}（{exc}）") from exc
    return json_path, csv_path


def load_result(path: Union[str, Path]) -> ExperimentResult:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"结果读取失败：{path}（{exc}）") from exc
    return ExperimentResult.model_validate_json(text)


# ---------- config files ----------
def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(x) for x in value.replace(" ", "").split(",") if x)


def parse_config_text(text: str) -> ExperimentConfig:
    """
    Flat `key = value` lines, `#` comments. Keys: ensemble, m, k, layers, family and
    its hyperparameters, param_seed, data_seed, n_grid, trials, decoder.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"配置第 {lineno} 行缺少 '='：{raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in {"ensemble", "family"} | _ENSEMBLE_KEYS | _FAMILY_KEYS | _RUN_KEYS:
            raise UsageError(f"未知配置项：{key}")
        values[key] = value

    for key in ("ensemble", "family", "n_grid"):
        if key not in values:
            raise UsageError(f"配置缺少必填项：{key}")

    ensemble: dict = {"kind": values["ensemble"]}
    if "m" in values:
        ensemble["m"] = int(values["m"])
    if "k" in values:
        ensemble["k"] = int(values["k"])
    if "layers" in values:
        ensemble["layers"] = _ints(values["layers"])

    hyper = {}
    for key in _FAMILY_KEYS & values.keys():
        hyper[key] = int(values[key]) if key == "v" else float(values[key])

    return ExperimentConfig(
        ensemble=EnsembleSpec(**ensemble),
        family=FamilyModel.from_config(values["family"], **hyper),
        param_seed=int(values.get("param_seed", 0)),
        data_seed=int(values.get("data_seed", 0)),
        n_grid=_ints(values["n_grid"]),
        trials=int(values.get("trials", load_config()["experiments"]["trials"])),
        decoder=values.get("decoder", "oracle_bayes"),
    )


def parse_config_file(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"配置文件不存在：{path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


# ---------- KL domination property ----------
def _random_pair(family: FamilyModel, rng: np.random.Generator) -> tuple[FamilyModel, np.ndarray, np.ndarray]:
    if family.kind == "cpt":
        v = int(rng.integers(2, 6))
        model = family.model_copy(update={"v": v, "theta_min": min(family.theta_min, 1.0 / v)})
        alpha = float(rng.choice([0.3, 1.0, 5.0]))
        p = rng.dirichlet(np.full(v, alpha)) + 1e-12
        q = rng.dirichlet(np.full(v, alpha)) + 1e-12
        return model, np.log(p / p.sum()), np.log(q / q.sum())
    scale = float(rng.choice([0.5, 2.0, 8.0]))
    return family, rng.uniform(-scale, scale, size=1), rng.uniform(-scale, scale, size=1)


def kl_property_run(family: FamilyModel, trials: int, seed: int) -> KlRun:
    """0 ≤ KL(η₁‖η₂) ≤ Δ(η₁,η₂) over random natural-parameter pairs."""
    if trials < 1:
        raise UsageError(f"trials 必须 ≥ 1：{trials}")
    tol = tolerance("exact")
    violations = 0
    max_kl = 0.0
    max_ratio = 0.0
    for t in range(trials):
        model, eta1, eta2 = _random_pair(family, derive_rng(seed, t))
        kl = kl_exact(model, eta1, eta2)
        delta = delta_bound(model, eta1, eta2)
        if kl < -tol or kl > delta + tol:
            violations += 1
            logger.warning("KL domination violated: kl=%.6g delta=%.6g", kl, delta)
        max_kl = max(max_kl, kl)
        if delta > 0:
            max_ratio = max(max_ratio, kl / delta)
    return KlRun(
        family=family.kind,
        trials=trials,
        seed=seed,
        violations=violations,
        max_kl=max_kl,
        max_ratio=max_ratio,
    )
