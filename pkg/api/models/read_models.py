from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from api.models.data_models import ExperimentRunBase
from grrm.harness.config import SolveConfig


########################
# Registry read models #
########################
class ExperimentRunRead(ExperimentRunBase):
    id: int
    created_at: datetime


##################
# Solve payloads #
##################
class SolveRequest(SolveConfig):
    record: bool = False


class SolveResponse(BaseModel):
    status: str
    objective: Optional[float] = None
    entropy: Optional[float] = None
    discrepancies: List[Optional[float]] = Field(default_factory=list)
    feasibility_residuals: List[Optional[float]] = Field(default_factory=list)
    gap: Optional[float] = None
    support_restricted: bool = False
    message: str = ""
    fingerprint: str
    q_star: Dict[str, float] = Field(default_factory=dict)
    rule: Dict[str, Any] = Field(default_factory=dict)
    run_id: Optional[int] = None


class TripleDiagnosis(BaseModel):
    index: int
    kind: str
    applicable: bool
    message: str = ""
    minimum: Optional[float] = None
    negative_entries: Dict[str, float] = Field(default_factory=dict)


class TripleDescription(BaseModel):
    index: int
    kind: str
    training_size: int
    bridge_size: int
    test_to_bridge_shape: List[int]
    train_to_bridge_shape: List[int]
    sample_count: int
    weight: float
