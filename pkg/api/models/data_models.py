from datetime import datetime, timezone
from typing import Any, Dict, Optional
import enum

from pydantic import field_validator
from sqlmodel import JSON, Column, Field, SQLModel


# -------------------- Enums --------------------
class RunKindEnum(str, enum.Enum):
    solve = "solve"
    noise_sweep = "noise-sweep"
    learning_curve = "learning-curve"
    benchmark = "benchmark"


# -------------------- Base SQLModel --------------------
class ExperimentRunBase(SQLModel):
    kind: str = Field(index=True)
    fingerprint: str = Field(index=True)
    output_dir: Optional[str] = None
    summary: Optional[Dict[str, Any]] = Field(default=None, sa_column=Column(JSON))
    note: Optional[str] = None


# -------------------- Table + Update --------------------
class ExperimentRun(ExperimentRunBase, table=True):
    __tablename__ = "experiment_runs"

    id: Optional[int] = Field(default=None, primary_key=True)
    created_at: datetime = Field(
        default_factory=lambda: datetime.now(timezone.utc), nullable=False
    )


class ExperimentRunUpsert(ExperimentRunBase):
    @field_validator("kind", mode="before")
    @classmethod
    def known_kind(cls, v):
        if isinstance(v, RunKindEnum):
            return v.value
        return RunKindEnum(v).value
