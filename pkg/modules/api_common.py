# -*- coding: utf-8 -*-
"""Response envelope and library-error → HTTP mapping shared by the routers."""

from typing import Any

from fastapi import HTTPException
from pydantic import BaseModel, ValidationError

from modules.common import BnLimitsError, CapabilityError


class ApiEnvelope(BaseModel):
    code: int
    msg: str
    data: Any


def ok(data: Any) -> dict:
    return {"code": 0, "msg": "", "data": data}


def http_error(exc: Exception) -> HTTPException:
    if isinstance(exc, CapabilityError):
        return HTTPException(status_code=413, detail=f"超出计算上限：{exc}")
    if isinstance(exc, (BnLimitsError, ValidationError)):
        return HTTPException(status_code=400, detail=str(exc))
    return HTTPException(status_code=500, detail=f"计算失败：{exc}")
