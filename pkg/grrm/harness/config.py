import enum
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator

from grrm.objective import NormChoice, StatisticChoice

load_dotenv()


@dataclass(frozen=True)
class Settings:
    database_url: str
    output_dir: Path
    log_level: str
    sql_echo: bool


def load_settings() -> Settings:
    return Settings(
        database_url=os.getenv("GRRM_DATABASE_URL", "sqlite:///grrm_runs.db"),
        output_dir=Path(os.getenv("GRRM_OUTPUT_DIR", "out")),
        log_level=os.getenv("GRRM_LOG_LEVEL", "INFO").upper(),
        sql_echo=os.getenv("GRRM_SQL_ECHO", "false").lower() in ("1", "true", "yes"),
    )


# -------------------- Enums --------------------
class ExperimentKind(str, enum.Enum):
    noise_sweep = "noise-sweep"
    learning_curve = "learning-curve"
    benchmark = "benchmark"


class TripleKind(str, enum.Enum):
    standard = "standard"
    noisy_labels = "noisy-labels"
    coarse_labels = "coarse-labels"
    privileged = "privileged"
    tes_corrupted = "tes-corrupted"
    trs_corrupted = "trs-corrupted"
    representation = "representation"
    combined = "combined"
    precise_labels = "precise-labels"
    unlabeled = "unlabeled"
    missing_feature = "missing-feature"


class CoarseMap(str, enum.Enum):
    multiple = "multiple"
    weak = "weak"


NAMED_WINDOWS = {
    "upper-left-2x2": (0, 1, 3, 4),
    "middle-column": (1, 4, 7),
    "all-but-corners": (0, 1, 3, 4, 5, 7, 8),
}


def _as_grid(v):
    if isinstance(v, (int, float)):
        return [float(v)]
    if isinstance(v, str):
        return [float(part) for part in v.split(",") if part.strip()]
    return v


# -------------------- Board + dataset --------------------
class BoardConfig(BaseModel):
    """Observed cells of the 3×3 board, numbered row-major from the upper-left corner."""

    window: tuple[int, ...] = NAMED_WINDOWS["upper-left-2x2"]

    @field_validator("window", mode="before")
    @classmethod
    def named_window(cls, v):
        if isinstance(v, str):
            if v not in NAMED_WINDOWS:
                raise ValueError(f"unknown window {v!r}; expected one of {sorted(NAMED_WINDOWS)}")
            return NAMED_WINDOWS[v]
        return v

    @field_validator("window")
    @classmethod
    def cells_on_board(cls, v):
        if not v or len(set(v)) != len(v) or any(not 0 <= c <= 8 for c in v):
            raise ValueError("window cells must be distinct indices in 0..8")
        return tuple(v)


class DatasetSpec(BaseModel):
    path: Path
    label_column: str
    positive_label: Optional[str] = None
    feature_columns: Optional[List[str]] = None
    numeric_columns: List[str] = Field(default_factory=list)
    bins: int = Field(default=8, ge=2)


# -------------------- Scheme files --------------------
class TripleSpec(BaseModel):
    kind: TripleKind
    samples: Union[Path, List[List[Any]]]
    rho_minus: Optional[float] = None
    rho_plus: Optional[float] = None
    eta: Optional[float] = None
    label_kernel: Optional[Path] = None
    feature_kernel: Optional[Path] = None
    training_components: Optional[List[List[Any]]] = None
    keep: Optional[List[int]] = None
    test_keep: Optional[List[int]] = None
    coarse_labels: Optional[List[List[Any]]] = None
    coarse_map: CoarseMap = CoarseMap.multiple
    fine_labels: Optional[List[Any]] = None
    refinement: Optional[dict[str, Any]] = None
    component: Optional[int] = None


class SchemeSpec(BaseModel):
    """Test space and triples; samples are lists of feature components followed by the label."""

    feature_components: List[List[Any]]
    labels: List[Any] = Field(default_factory=lambda: [-1, 1])
    triples: List[TripleSpec]
    weights: Union[str, List[float]] = "auto"

    @field_validator("weights", mode="before")
    @classmethod
    def auto_or_list(cls, v):
        if isinstance(v, str) and v != "auto":
            raise ValueError('weights must be "auto" or a list of positive numbers')
        if isinstance(v, list) and any(w <= 0 for w in v):
            raise ValueError("weights must be positive")
        return v

    @model_validator(mode="after")
    def weights_match(self):
        if isinstance(self.weights, list) and len(self.weights) != len(self.triples):
            raise ValueError("one weight per triple is required")
        if not self.triples:
            raise ValueError("a scheme needs at least one triple")
        return self


class SolveConfig(BaseModel):
    scheme: SchemeSpec
    lam: float = Field(default=0.1, alias="lambda", gt=0)
    norm: NormChoice = NormChoice.max_abs
    statistic: StatisticChoice = StatisticChoice.indicator
    statistic_files: Optional[List[Path]] = None
    marginal_pin: Optional[List[float]] = None
    restrict_support: bool = True
    tolerance: float = Field(default=1e-6, gt=0)

    model_config = {"populate_by_name": True}


# -------------------- Experiments --------------------
class ExperimentConfig(BaseModel):
    kind: ExperimentKind
    board: BoardConfig = Field(default_factory=BoardConfig)
    dataset: Optional[DatasetSpec] = None
    lambda_grid: List[float] = Field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    norm: NormChoice = NormChoice.max_abs
    statistic: StatisticChoice = StatisticChoice.indicator
    seed: int = 0
    reps: int = Field(default=20, ge=1)
    validation_fraction: float = Field(default=0.2, gt=0, lt=1)
    workers: int = Field(default=1, ge=1)

    # noise sweep
    noise_grid: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4])
    rho_minus_ratio: float = Field(default=0.5, ge=0)
    train_size: int = Field(default=500, ge=2)
    test_size: int = Field(default=458, ge=1)

    # learning curve
    base_per_type: int = Field(default=80, ge=1)
    growth_steps: List[int] = Field(default_factory=lambda: [0, 80, 160, 240])
    pool_size: int = Field(default=600, ge=1)
    curve_rates: tuple[float, float] = (0.1, 0.3)

    # benchmark
    label_noise: tuple[float, float] = (0.1, 0.3)
    test_fraction: float = Field(default=0.3, gt=0, lt=1)
    labeled_fraction: float = Field(default=0.05, gt=0, lt=1)
    unlabeled_fraction: float = Field(default=0.3, gt=0, lt=1)

    out: Optional[Path] = None

    @field_validator("lambda_grid", mode="before")
    @classmethod
    def coerce_grid(cls, v):
        return _as_grid(v)

    @field_validator("lambda_grid")
    @classmethod
    def positive_grid(cls, v):
        if not v or any(lam <= 0 for lam in v):
            raise ValueError("lambda grid entries must be positive")
        return v

    @field_validator("noise_grid")
    @classmethod
    def rates_in_range(cls, v):
        if any(not 0 <= rate <= 0.5 for rate in v):
            raise ValueError("noise grid entries must lie in [0, 0.5]")
        return v

    @field_validator("growth_steps")
    @classmethod
    def nonnegative_steps(cls, v):
        if not v or any(step < 0 for step in v):
            raise ValueError("growth steps must be nonnegative")
        return sorted(set(v))

    @model_validator(mode="after")
    def sizes_fit(self):
        if self.kind is ExperimentKind.noise_sweep and self.dataset is None:
            if self.train_size + self.test_size > 958:
                raise ValueError("train_size + test_size exceeds the 958 endgame boards")
        if self.kind is ExperimentKind.learning_curve:
            if self.pool_size >= 958:
                raise ValueError("the training pool must leave boards for testing")
            if self.base_per_type + max(self.growth_steps) > self.pool_size:
                raise ValueError("base_per_type + the largest growth step exceeds the pool")
        if self.kind is ExperimentKind.noise_sweep and (1 + self.rho_minus_ratio) * max(self.noise_grid, default=0) >= 1:
            raise ValueError("rho_plus + rho_minus must stay below 1 on the whole noise grid")
        if self.labeled_fraction + self.unlabeled_fraction >= 1:
            raise ValueError("labeled and unlabeled fractions must leave room for testing")
        return self

    def fingerprint(self) -> str:
        return config_fingerprint(self)


def config_fingerprint(config: BaseModel) -> str:
    """sha256 of the canonical JSON dump; the output location is not part of it."""
    payload = config.model_dump(mode="json", exclude={"out", "workers"})
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_json(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
