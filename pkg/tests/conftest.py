# -*- coding: utf-8 -*-
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from modules.dag_core import Dag  # noqa: E402
from modules.expfam import ParamMap  # noqa: E402
from modules.models import EnsembleSpec, FamilyModel  # noqa: E402


@pytest.fixture
def chain3() -> Dag:
    return Dag.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def collider3() -> Dag:
    return Dag.from_edges(3, [(0, 2), (1, 2)])


@pytest.fixture
def restricted3() -> EnsembleSpec:
    return EnsembleSpec(kind="restricted_all", m=3)


@pytest.fixture
def layered11() -> EnsembleSpec:
    return EnsembleSpec(kind="layered_all", layers=(1, 1))


@pytest.fixture
def cpt_family() -> FamilyModel:
    return FamilyModel(kind="cpt", v=2, theta_min=0.2)


@pytest.fixture
def cpt_params(cpt_family) -> ParamMap:
    return ParamMap(cpt_family, seed=3)
