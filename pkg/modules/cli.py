# -*- coding: utf-8 -*-
"""
Command-line driver. stdout carries JSON/CSV/text; progress goes to stderr.

Exit codes: 0 success, 2 usage/domain error, 3 capability limit, 4 verification FAIL.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from modules.bounds import FAMILY_ORDER, bound_for, delta_max, table1, threshold_corollary
from modules.common import (
    DATA_DIR,
    LN2,
    BnLimitsError,
    CapabilityError,
    round_floats,
)
from modules.ensembles import (
    count_bounds_restricted,
    count_bounds_sparse,
    count_essential_brute,
    count_essential_recurrence,
    count_layered,
    count_sparse_recurrence_bounds,
    sample_batch,
)
from modules.expfam import ParamMap
from modules.experiments import (
    kl_property_run,
    parse_config_file,
    persist,
    result_frame,
    run_error_curve,
    verify_threshold,
)
from modules.infotheory import fano_property_run, mi_exact, mi_monte_carlo
from modules.models import EnsembleSpec, FamilyModel
from modules.report_export import save_table1_workbook


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CAPABILITY = 3
EXIT_FAIL = 4

# keys holding logarithmic quantities; --bits divides these by ln 2
_LOG_KEYS = {
    "delta_max",
    "delta_certified",
    "log_size_lb",
    "exact_or_estimate",
    "upper_bound_kl",
    "upper_bound_assumption",
    "mi",
    "h",
    "max_kl",
}

_HYPER_FLAGS = {
    "v": "v",
    "theta_min": "theta_min",
    "mu_a": "mu_a",
    "mu_b": "mu_b",
    "sigma_min": "sigma_min",
    "sigma_max": "sigma_max",
    "wmax": "w_max",
    "theta": "theta",
    "wmax1": "w_max_1",
}


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(f"{self.prog}: {message}")


# ---------- argument builders ----------
def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "text"), default="json", help="输出格式")
    common.add_argument("--bits", action="store_true", help="对数量以 bit 输出（默认 nats）")
    common.add_argument("--out", type=Path, default=None, help="写入文件而不是 stdout")
    common.add_argument("--verbose", action="store_true", help="stderr 输出调试日志")
    return common


def _add_ensemble(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument(
        "--ensemble",
        required=required,
        help="restricted | layered | restricted_all | restricted_sparse | layered_all | layered_sparse",
    )
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--layers", default=None, help="逗号分隔的层大小，例如 1,4")


def _add_family(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--family", required=required, choices=FAMILY_ORDER)
    _add_hyper(p)


def _add_hyper(p: argparse.ArgumentParser) -> None:
    p.add_argument("--v", type=int, default=None, help="cpt 取值个数")
    p.add_argument("--theta-min", dest="theta_min", type=float, default=None)
    p.add_argument("--mu-a", dest="mu_a", type=float, default=None)
    p.add_argument("--mu-b", dest="mu_b", type=float, default=None)
    p.add_argument("--sigma-min", dest="sigma_min", type=float, default=None)
    p.add_argument("--sigma-max", dest="sigma_max", type=float, default=None)
    p.add_argument("--wmax", type=float, default=None, help="gaussian ℓ2 权重上界")
    p.add_argument("--theta", type=float, default=None, help="noisy-OR θ")
    p.add_argument("--wmax1", type=float, default=None, help="logistic ℓ1 权重上界")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="bnlimits", description="贝叶斯网络结构学习样本复杂度下界工具")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("count", parents=[common], help="集合大小（精确值或上下界）")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--layers", default=None)
    p.add_argument("--method", choices=("recurrence", "brute", "bounds"), default="recurrence")

    p = sub.add_parser("bound", parents=[common], help="阈值 L 与 Δ_max")
    _add_ensemble(p)
    _add_family(p)
    p.add_argument("--corollary", action="store_true", help="使用带余项 R(m,k) 的推论形式")

    p = sub.add_parser("table1", parents=[common], help="分布族 × {非稀疏, 稀疏} 阈值表")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    _add_hyper(p)
    p.add_argument("--xlsx", type=Path, default=None, help="同时导出 Excel")

    p = sub.add_parser("sample", parents=[common], help="从集合中均匀抽样 DAG")
    _add_ensemble(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=1)

    p = sub.add_parser("mi", parents=[common], help="I(S; G | Θ) 精确值或蒙特卡洛估计")
    _add_ensemble(p)
    _add_family(p)
    p.add_argument("--n", type=int, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--mc", type=int, default=None, metavar="T", help="蒙特卡洛次数")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param-seed", dest="param_seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("verify-kl", parents=[common], help="检验 0 ≤ KL ≤ Δ")
    _add_family(p)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("verify-fano", parents=[common], help="检验扩展 Fano 不等式")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    for name, text in (("simulate", "运行误差曲线实验"), ("verify-threshold", "检验 n ≤ L 时误差 ≥ 1/2")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--results", type=Path, default=None, help="结果 JSON 路径（CSV 同名）")
    return parser


# ---------- input helpers ----------
def _layers(text: Optional[str]) -> Optional[tuple[int, ...]]:
    if not text:
        return None
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise CliUsageError(f"--layers 必须是逗号分隔的整数：{text}") from exc


def ensemble_from_args(args: argparse.Namespace) -> EnsembleSpec:
    kind = args.ensemble
    if kind in ("restricted", "layered"):
        kind = f"{kind}_sparse" if args.k is not None else f"{kind}_all"
    return EnsembleSpec(kind=kind, m=args.m, k=args.k, layers=_layers(args.layers))


def family_from_args(args: argparse.Namespace, kind: Optional[str] = None) -> FamilyModel:
    overrides = {field: getattr(args, flag) for flag, field in _HYPER_FLAGS.items()}
    return FamilyModel.from_config(kind or args.family, **overrides)


# ---------- output ----------
def to_bits(payload: Any) -> Any:
    if isinstance(payload, dict):
        return {
            key: (value / LN2 if key in _LOG_KEYS and isinstance(value, float) else to_bits(value))
            for key, value in payload.items()
        }
    if isinstance(payload, list):
        return [to_bits(v) for v in payload]
    return payload


def _flatten(payload: Any, prefix: str = "") -> dict:
    out = {}
    if isinstance(payload, dict):
        for key, value in payload.items():
            out.update(_flatten(value, f"{prefix}{key}."))
        return out
    if isinstance(payload, list):
        out[prefix[:-1]] = json.dumps(payload, ensure_ascii=False)
        return out
    out[prefix[:-1]] = payload
    return out


def render(payload: Any, fmt: str, frame: Optional[pd.DataFrame] = None) -> str:
    if fmt == "json":
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    if fmt == "csv":
        if frame is None:
            rows = payload if isinstance(payload, list) else [payload]
            frame = pd.DataFrame([_flatten(r) for r in rows])
        return frame.to_csv(index=False)
    rows = payload if isinstance(payload, list) else [payload]
    blocks = []
    for row in rows:
        flat = round_floats(_flatten(row))
        width = max((len(k) for k in flat), default=0)
        blocks.append("\n".join(f"{k.ljust(width)}: {v}" for k, v in flat.items()))
    return "\n\n".join(blocks)


def emit(args: argparse.Namespace, payload: Any, frame: Optional[pd.DataFrame] = None) -> None:
    if args.bits:
        payload = to_bits(payload)
    text = render(payload, args.format, frame)
    if args.out is None:
        sys.stdout.write(text.rstrip("\n") + "\n")
        return
    try:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text.rstrip("\n") + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"输出写入失败：{args.out}（{exc}）") from exc
    print(f"已写入：{args.out}", file=sys.stderr)


def _report_payload(report) -> dict:
    payload = report.model_dump(mode="json")
    payload["certified_L"] = report.certified_L
    return payload


# ---------- subcommands ----------
def cmd_count(args) -> int:
    layers = _layers(args.layers)
    if layers:
        spec = EnsembleSpec(
            kind="layered_sparse" if args.k is not None else "layered_all", k=args.k, layers=layers
        )
        emit(args, {"ensemble": spec.label(), "method": "exact", "count": count_layered(spec)})
        return EXIT_OK
    if args.m is None:
        raise CliUsageError("count 需要 --m 或 --layers")
    m, k = args.m, args.k
    payload: dict = {"m": m, "k": k, "method": args.method}
    if args.method == "brute":
        payload["count"] = count_essential_brute(m, k)
    elif args.method == "bounds":
        payload["lower"], payload["upper"] = count_bounds_restricted(m) if k is None else count_bounds_sparse(m, k)
    elif k is None:
        payload["count"] = count_essential_recurrence(m)
    else:
        payload["lower"], payload["upper"] = count_sparse_recurrence_bounds(m, k)
    emit(args, payload)
    return EXIT_OK


def cmd_bound(args) -> int:
    spec = ensemble_from_args(args)
    family = family_from_args(args)
    if args.corollary:
        if spec.is_layered:
            raise CliUsageError("--corollary 只适用于 restricted 集合")
        report = threshold_corollary(spec.m, spec.k, delta_max(family), family)
    else:
        report = bound_for(spec, family)
    emit(args, _report_payload(report))
    return EXIT_OK


def cmd_table1(args) -> int:
    families = [family_from_args(args, kind) for kind in FAMILY_ORDER]
    grid = table1(args.m, args.k, families)
    rows = []
    for kind, cells in grid.items():
        rows.append(
            {
                "family": kind,
                "delta_max": cells["non_sparse"].delta_max,
                "non_sparse": cells["non_sparse"].threshold_L,
                "sparse": cells["sparse"].threshold_L,
                "R": cells["sparse"].R,
                "vacuous_non_sparse": cells["non_sparse"].vacuous,
                "vacuous_sparse": cells["sparse"].vacuous,
            }
        )
    if args.xlsx is not None:
        path = save_table1_workbook(args.xlsx, args.m, args.k, families, args.bits)
        print(f"已导出 Excel：{path}", file=sys.stderr)
    emit(args, rows)
    return EXIT_OK


def cmd_sample(args) -> int:
    spec = ensemble_from_args(args)
    dags = [g.to_dict() for g in sample_batch(spec, args.seed, args.count)]
    payload = {"ensemble": spec.label(), "seed": args.seed, "dags": dags}
    frame = pd.DataFrame(
        [{"index": i, "m": d["m"], "parents": json.dumps(d["parents"])} for i, d in enumerate(dags)]
    )
    emit(args, payload, frame)
    return EXIT_OK


def cmd_mi(args) -> int:
    spec = ensemble_from_args(args)
    pm = ParamMap(family_from_args(args), args.param_seed)
    if args.mc is not None:
        report = mi_monte_carlo(spec, pm, args.n, args.mc, args.seed, args.workers)
    else:
        report = mi_exact(spec, pm, args.n)
    emit(args, report.model_dump(mode="json"))
    return EXIT_OK


def cmd_verify_kl(args) -> int:
    run = kl_property_run(family_from_args(args), args.trials, args.seed)
    emit(args, run.model_dump(mode="json"))
    return EXIT_FAIL if run.violations else EXIT_OK


def cmd_verify_fano(args) -> int:
    run = fano_property_run(args.trials, args.seed)
    emit(args, run.model_dump(mode="json"))
    return EXIT_FAIL if run.violations or run.violations_sup else EXIT_OK


def _results_path(args) -> Path:
    return args.results or DATA_DIR / "results" / f"{args.config.stem}.json"


def cmd_simulate(args) -> int:
    cfg = parse_config_file(args.config)
    print(f"开始模拟：{cfg.ensemble.label()} / {cfg.family.kind} / n={list(cfg.n_grid)}", file=sys.stderr)
    result = run_error_curve(cfg, workers=args.workers)
    json_path, csv_path = persist(result, _results_path(args))
    print(f"结果已保存：{json_path}，{csv_path}", file=sys.stderr)
    emit(args, result.model_dump(mode="json", by_alias=True), result_frame(result))
    return EXIT_OK


def cmd_verify_threshold(args) -> int:
    cfg = parse_config_file(args.config)
    print(f"开始阈值检验：{cfg.ensemble.label()} / {cfg.family.kind}", file=sys.stderr)
    verdict = verify_threshold(cfg, workers=args.workers)
    if verdict.result is not None:
        json_path, _ = persist(verdict.result, _results_path(args))
        print(f"结果已保存：{json_path}", file=sys.stderr)
    payload = verdict.model_dump(mode="json", by_alias=True)
    frame = result_frame(verdict.result) if verdict.result is not None else None
    emit(args, payload, frame)
    print(f"检验结论：{verdict.status}", file=sys.stderr)
    return EXIT_FAIL if verdict.status == "FAIL" else EXIT_OK


COMMANDS = {
    "count": cmd_count,
    "bound": cmd_bound,
    "table1": cmd_table1,
    "sample": cmd_sample,
    "mi": cmd_mi,
    "verify-kl": cmd_verify_kl,
    "verify-fano": cmd_verify_fano,
    "simulate": cmd_simulate,
    "verify-threshold": cmd_verify_threshold,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except CapabilityError as exc:
        print(f"超出计算上限：{exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (BnLimitsError, ValidationError, CliUsageError) as exc:
        print(f"参数错误：{exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        logger.error("文件读写失败：%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
