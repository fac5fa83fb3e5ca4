from pydantic import BaseModel, ConfigDict, Field, model_validator


class PlanEntry(BaseModel):
    """Original and target row count of one class."""

    model_config = ConfigDict(frozen=True)

    original_count: int = Field(..., ge=0, description="Real training rows of the class")
    target_count: int = Field(..., ge=0, description="Rows of the class after augmentation")

    @model_validator(mode="after")
    def _check_target(self) -> "PlanEntry":
        if self.target_count < self.original_count:
            raise ValueError(f"target_count {self.target_count} < original_count {self.original_count}")
        return self

    @property
    def synthetic_count(self) -> int:
        return self.target_count - self.original_count


class AugmentationPlan(BaseModel):
    """Per-class original/target counts of an augmented training set."""

    model_config = ConfigDict(frozen=True)

    entries: dict[str, PlanEntry] = Field(..., description="Class name -> counts, in class order")
    source: str = Field("explicit", description="Preset name, 'scaled' or 'explicit'")

    @property
    def augmented_classes(self) -> list[str]:
        return [name for name, entry in self.entries.items() if entry.synthetic_count > 0]

    @property
    def total_synthetic(self) -> int:
        return sum(entry.synthetic_count for entry in self.entries.values())

    def targets(self) -> dict[str, int]:
        return {name: entry.target_count for name, entry in self.entries.items()}


class ScalePolicy(BaseModel):
    """Grow selected classes by a factor, capped at an absolute row count."""

    model_config = ConfigDict(frozen=True)

    factor: float = Field(5.0, ge=1.0, description="Target = original * factor")
    cap: int | None = Field(None, ge=0, description="Upper bound on the target count")
    classes: list[str] = Field(..., min_length=1, description="Classes to augment")
