# -*- coding: utf-8 -*-
"""
阈值接口
POST /api/bounds/bound          - 单个集合 × 分布族的 Δ_max 与阈值 L
POST /api/bounds/table1         - 分布族 × {非稀疏, 稀疏} 阈值表（JSON）
POST /api/bounds/table1/export  - 同上，导出 Excel
"""

from typing import Optional
from urllib.parse import quote

from fastapi import APIRouter
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from modules.api_common import ApiEnvelope, http_error, ok
from modules.bounds import FAMILY_ORDER, bound_for, delta_max, table1, threshold_corollary
from modules.common import BnLimitsError
from modules.models import EnsembleSpec, FamilyModel
from modules.report_export import XLSX_MEDIA_TYPE, table1_workbook


router = APIRouter()


class BoundBody(BaseModel):
    ensemble: EnsembleSpec
    family: FamilyModel
    corollary: bool = False


class Table1Body(BaseModel):
    m: int = Field(..., ge=3)
    k: int = Field(..., ge=1)
    families: list[FamilyModel] = Field(default_factory=list, description="覆盖默认超参数的分布族")
    bits: bool = False


def _report(report) -> dict:
    data = report.model_dump(mode="json")
    data["certified_L"] = report.certified_L
    return data


@router.post("/api/bounds/bound", response_model=ApiEnvelope)
def bounds_bound(body: BoundBody):
    try:
        if body.corollary and not body.ensemble.is_layered:
            report = threshold_corollary(
                body.ensemble.m, body.ensemble.k, delta_max(body.family), body.family
            )
        else:
            report = bound_for(body.ensemble, body.family)
    except (BnLimitsError, ValueError) as exc:
        raise http_error(exc) from exc
    return ok(_report(report))


def _families(body: Table1Body) -> Optional[list[FamilyModel]]:
    return body.families or None


@router.post("/api/bounds/table1", response_model=ApiEnvelope)
def bounds_table1(body: Table1Body):
    try:
        grid = table1(body.m, body.k, _families(body))
    except (BnLimitsError, ValueError) as exc:
        raise http_error(exc) from exc
    return ok(
        {
            "m": body.m,
            "k": body.k,
            "order": list(FAMILY_ORDER),
            "cells": {
                kind: {column: _report(report) for column, report in cells.items()}
                for kind, cells in grid.items()
            },
        }
    )


@router.post("/api/bounds/table1/export", summary="导出 Table 1 Excel")
def bounds_table1_export(body: Table1Body):
    try:
        output = table1_workbook(body.m, body.k, _families(body), body.bits)
    except (BnLimitsError, ValueError) as exc:
        raise http_error(exc) from exc
    filename = f"table1_m{body.m}_k{body.k}.xlsx"
    chinese_filename = f"样本数下界表_m{body.m}_k{body.k}.xlsx"
    disposition = f'attachment; filename="{filename}"; ' f"filename*=UTF-8''{quote(chinese_filename)}"
    return StreamingResponse(
        output,
        media_type=XLSX_MEDIA_TYPE,
        headers={"Content-Disposition": disposition, "Content-Type": XLSX_MEDIA_TYPE},
    )
