# -*- coding: utf-8 -*-
"""Shared paths, configuration, limits and error types."""

import math
import os
from decimal import Decimal
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np
import yaml


APP_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = Path(os.getenv("BNLIMITS_DATA_DIR", str(APP_DIR / "data")))
CONFIG_PATH = Path(__file__).resolve().parent / "config.yaml"

LN2 = math.log(2.0)


class BnLimitsError(ValueError):
    """Base class for every error raised by the library."""


class InvalidDagError(BnLimitsError):
    pass


class DimensionError(BnLimitsError):
    pass


class CapabilityError(BnLimitsError):
    """Raised when an exact computation would exceed a configured size limit."""


class DomainError(BnLimitsError):
    pass


class UsageError(BnLimitsError):
    pass


class StructureError(BnLimitsError):
    pass


class FeasibilityError(BnLimitsError):
    pass


@lru_cache(maxsize=1)
def load_config() -> dict:
    with open(CONFIG_PATH, encoding="utf-8") as f:
        return yaml.safe_load(f)


def limits() -> dict:
    return load_config()["limits"]


def max_enum_m() -> int:
    """Enumeration cap for unrestricted DAGs; BNLIMITS_MAX_ENUM overrides config."""
    override = os.getenv("BNLIMITS_MAX_ENUM")
    if override:
        try:
            return int(override)
        except ValueError as exc:
            raise UsageError(f"BNLIMITS_MAX_ENUM 必须是整数：{override!r}") from exc
    return int(limits()["max_enum_m"])


def default_workers() -> int:
    return int(os.getenv("BNLIMITS_WORKERS", load_config()["experiments"]["workers"]))


def tolerance(name: str) -> float:
    return float(load_config()["tolerances"][name])


def derive_rng(*keys: int) -> np.random.Generator:
    """Independent generator for a tuple of non-negative integer keys (seed, node, trial, ...)."""
    entropy = [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise DomainError(f"随机种子键必须 ≥ 0：{entropy}")
    return np.random.default_rng(np.random.SeedSequence(entropy))


def round_floats(x: Any, digits: int = 6) -> Any:
    """Recursively round floats for human-facing output; counts stay exact."""
    if isinstance(x, dict):
        return {k: round_floats(v, digits) for k, v in x.items()}
    if isinstance(x, list):
        return [round_floats(v, digits) for v in x]
    if isinstance(x, tuple):
        return tuple(round_floats(v, digits) for v in x)
    if isinstance(x, (float, np.floating, Decimal)):
        value = float(x)
        return value if not math.isfinite(value) else round(value, digits)
    return x
