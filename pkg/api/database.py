import logging
import os
from typing import Any, Optional

from dotenv import load_dotenv
from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from api.models.data_models import ExperimentRun
from grrm.harness.config import load_settings
from grrm.harness.output import json_safe

# Load root .env
load_dotenv(dotenv_path=os.path.join(os.path.dirname(__file__), "..", ".env"))

logger = logging.getLogger(__name__)

settings = load_settings()
DATABASE_URL = settings.database_url
connect_args = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}
engine = create_engine(DATABASE_URL, echo=settings.sql_echo, connect_args=connect_args)


def init_db(bind: Optional[Engine] = None):
    SQLModel.metadata.create_all(bind or engine)


def get_session():
    with Session(engine) as session:
        yield session


def record_run(
    kind: str,
    fingerprint: str,
    output_dir: Optional[str] = None,
    summary: Optional[dict[str, Any]] = None,
    note: Optional[str] = None,
    bind: Optional[Engine] = None,
) -> ExperimentRun:
    """Store one finished run in the registry and return the refreshed row."""
    bind = bind or engine
    init_db(bind)
    run = ExperimentRun(
        kind=kind,
        fingerprint=fingerprint,
        output_dir=output_dir,
        summary=json_safe(summary) if summary is not None else None,
        note=note,
    )
    with Session(bind) as session:
        session.add(run)
        session.commit()
        session.refresh(run)
    logger.info("recorded %s run %d (%s)", kind, run.id, fingerprint[:12])
    return run
