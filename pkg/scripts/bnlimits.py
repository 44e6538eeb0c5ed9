# -*- coding: utf-8 -*-
"""Run the bnlimits command line from a checkout, without installing anything."""

from __future__ import annotations

import sys
from pathlib import Path


PROJECT_DIR = Path(__file__).resolve().parents[1]
if str(PROJECT_DIR) not in sys.path:
    sys.path.insert(0, str(PROJECT_DIR))

from modules.cli import main  # noqa: E402


if __name__ == "__main__":
    try:
        sys.exit(main())
    except Exception as exc:
        print(f"bnlimits 运行失败：{exc}", file=sys.stderr)
        raise
