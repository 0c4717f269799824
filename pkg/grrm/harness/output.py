"""Result files: CSVs stamped with the config fingerprint and a JSON run summary."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from grrm.finite import Distribution, element_key

logger = logging.getLogger(__name__)

FINGERPRINT_PREFIX = "# config-sha256: "


def write_table(frame: pd.DataFrame, path: str | Path, fingerprint: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"{FINGERPRINT_PREFIX}{fingerprint}\n")
        frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def read_emitted_table(path: str | Path) -> tuple[str | None, pd.DataFrame]:
    """(fingerprint, table) of a file written by ``write_table``."""
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    fingerprint = first[len(FINGERPRINT_PREFIX) :].strip() if first.startswith(FINGERPRINT_PREFIX) else None
    return fingerprint, pd.read_csv(path, comment="#")


def json_safe(value):
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_summary(summary: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(json_safe(summary), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def distribution_frame(q: Distribution) -> pd.DataFrame:
    return pd.DataFrame({"element": [element_key(z) for z in q.space.elements], "mass": q.mass})


def write_distribution(q: Distribution, path: str | Path, fingerprint: str) -> Path:
    return write_table(distribution_frame(q), path, fingerprint)
