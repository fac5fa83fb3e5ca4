from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field, model_validator


class IdsKind(str, Enum):
    """IDS classifier presets."""

    CNN = "cnn"
    DNN = "dnn"
    LSTM = "lstm"
    CNN_BILSTM = "cnn_bilstm"
    CNN_LSTM = "cnn_lstm"


class ClassifierSpec(BaseModel):
    kind: IdsKind
    input_width: int = Field(..., ge=1, description="Number of encoded features F")
    n_classes: int = Field(..., ge=2)
    epochs: int = Field(100, ge=0)
    seed: int = 0


class ConfusionCounts(BaseModel):
    """One-vs-rest confusion counts of one class."""

    tp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


class RocCurve(BaseModel):
    thresholds: list[float] = Field(..., description="Descending score thresholds; the first is +inf")
    fpr: list[float]
    tpr: list[float]

    @model_validator(mode="after")
    def _check_curve(self) -> "RocCurve":
        if not len(self.thresholds) == len(self.fpr) == len(self.tpr):
            raise ValueError("thresholds, fpr and tpr must have the same length")
        if any(b < a for a, b in zip(self.fpr, self.fpr[1:], strict=False)) or any(b < a for a, b in zip(self.tpr, self.tpr[1:], strict=False)):
            raise ValueError("fpr and tpr must be nondecreasing")
        return self


class ClassMetrics(BaseModel):
    accuracy: float = Field(..., description="Fraction of the class's rows predicted as the class")
    f1: float = Field(..., description="One-vs-rest F1")
    support: int


class RunResult(BaseModel):
    """Metrics of one (kind, seed, condition) run."""

    dataset: str
    kind: IdsKind
    condition: str = Field(..., description="Training data condition, e.g. 'original' or 'augmented'")
    seed: int
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None
    accuracy: float | None = None
    macro_f1: float | None = None
    per_class: dict[str, ClassMetrics] = Field(default_factory=dict)
    auroc: float | None = None
    tpr_at_fpr: float | None = None


class MetricSummary(BaseModel):
    mean: float
    std: float


class ConditionSummary(BaseModel):
    """Aggregate over the successful runs of one (kind, condition)."""

    kind: IdsKind
    condition: str
    n_runs: int
    failed_runs: int
    single_run: bool
    metrics: dict[str, MetricSummary] = Field(default_factory=dict, description="Metric name -> mean/std over runs")


class EvalReport(BaseModel):
    """Per-run values and their mean/std aggregates for one experiment."""

    experiment: Literal["binary", "multi", "loao"]
    dataset: str
    class_names: list[str]
    unknown_class: str | None = None
    target_fpr: float
    config: dict = Field(default_factory=dict, description="Resolved settings echo")
    runs: list[RunResult] = Field(default_factory=list)
    summaries: list[ConditionSummary] = Field(default_factory=list)

    @property
    def failed_runs(self) -> int:
        return sum(1 for run in self.runs if run.status == "failed")
