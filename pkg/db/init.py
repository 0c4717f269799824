"""Import the summary.json files under an output directory into the run registry.

    python -m db.init out/
"""

import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from sqlmodel import Session, select

from api.database import engine, init_db, record_run
from api.models.data_models import ExperimentRun, RunKindEnum

# load .env
load_dotenv()

logger = logging.getLogger(__name__)


def import_summaries(root: Path, bind=None) -> int:
    """Record every summary not already registered under the same fingerprint and directory."""
    bind = bind or engine
    init_db(bind)
    added = 0
    for path in sorted(root.rglob("summary.json")):
        with open(path, "r", encoding="utf-8") as f:
            summary = json.load(f)
        kind = summary.get("kind", RunKindEnum.solve.value)
        fingerprint = summary.get("fingerprint")
        if fingerprint is None or kind not in {k.value for k in RunKindEnum}:
            logger.warning("skipping %s: no fingerprint or unknown kind", path)
            continue
        with Session(bind) as session:
            existing = session.exec(
                select(ExperimentRun).where(
                    ExperimentRun.fingerprint == fingerprint,
                    ExperimentRun.output_dir == str(path.parent),
                )
            ).first()
        if existing is not None:
            continue
        record_run(kind, fingerprint, str(path.parent), summary, bind=bind)
        added += 1
    return added


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    print(f"imported {import_summaries(root)} runs from {root}")
