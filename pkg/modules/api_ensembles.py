# -*- coding: utf-8 -*-
"""
集合接口
POST /api/ensembles/count   - 集合大小（精确值、递推或上下界）
POST /api/ensembles/sample  - 从集合中均匀抽样 DAG
"""

from typing import Literal, Optional

from fastapi import APIRouter
from pydantic import BaseModel, Field

from modules.api_common import ApiEnvelope, http_error, ok
from modules.common import BnLimitsError
from modules.ensembles import (
    count_bounds_restricted,
    count_bounds_sparse,
    count_essential_brute,
    count_essential_recurrence,
    count_layered,
    count_sparse_recurrence_bounds,
    log_size_lower_bound,
    sample_batch,
)
from modules.models import EnsembleSpec


router = APIRouter()

MAX_SAMPLE_COUNT = 10_000


class CountBody(BaseModel):
    m: Optional[int] = Field(None, ge=0)
    k: Optional[int] = None
    layers: Optional[list[int]] = None
    method: Literal["recurrence", "brute", "bounds"] = "recurrence"


class SampleBody(BaseModel):
    ensemble: EnsembleSpec
    seed: int = Field(..., ge=0)
    count: int = Field(1, ge=0, le=MAX_SAMPLE_COUNT)


def _count(body: CountBody) -> dict:
    if body.layers:
        spec = EnsembleSpec(
            kind="layered_sparse" if body.k is not None else "layered_all",
            k=body.k,
            layers=tuple(body.layers),
        )
        count = count_layered(spec)
        # counts can exceed 2^53; strings keep them exact for JS clients
        return {
            "ensemble": spec.label(),
            "method": "exact",
            "count": str(count),
            "log_size_lb": log_size_lower_bound(spec),
        }
    if body.m is None:
        raise BnLimitsError("需要 m 或 layers")
    m, k = body.m, body.k
    out: dict = {"m": m, "k": k, "method": body.method}
    if body.method == "brute":
        out["count"] = str(count_essential_brute(m, k))
    elif body.method == "bounds":
        lower, upper = count_bounds_restricted(m) if k is None else count_bounds_sparse(m, k)
        out.update(lower=str(lower), upper=str(upper))
    elif k is None:
        out["count"] = str(count_essential_recurrence(m))
    else:
        lower, upper = count_sparse_recurrence_bounds(m, k)
        out.update(lower=str(lower), upper=str(upper))
    return out


@router.post("/api/ensembles/count", response_model=ApiEnvelope)
def ensembles_count(body: CountBody):
    try:
        return ok(_count(body))
    except (BnLimitsError, ValueError) as exc:
        raise http_error(exc) from exc


@router.post("/api/ensembles/sample", response_model=ApiEnvelope)
def ensembles_sample(body: SampleBody):
    try:
        dags = sample_batch(body.ensemble, body.seed, body.count)
    except (BnLimitsError, ValueError) as exc:
        raise http_error(exc) from exc
    return ok({"ensemble": body.ensemble.label(), "seed": body.seed, "dags": [g.to_dict() for g in dags]})
