import sys
from enum import Enum
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.exceptions import DataError, SchemaError

ENCODED_TOLERANCE = 1e-9
# Discrete cells read back from a float32 container are compared to codes with this slack
CODE_TOLERANCE = 1e-6


class FieldKind(str, Enum):
    """Feature kinds."""

    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class FieldRole(str, Enum):
    """Field roles."""

    FEATURE = "feature"
    LABEL = "label"


class Provenance(int, Enum):
    """Row provenance flags."""

    REAL = 0
    SYNTHETIC = 1


class FieldSpec(BaseModel):
    """One column of a flow table."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1, description="Column name in the flow table header")
    kind: FieldKind = Field(FieldKind.CONTINUOUS, description="Discrete fields get a codebook, continuous fields a scaler")
    role: FieldRole = Field(FieldRole.FEATURE, description="Exactly one field carries the class label")


class FeatureSchema(BaseModel):
    """Discrete/continuous partition of the F features plus the label field."""

    model_config = ConfigDict(frozen=True)

    name: str = Field("custom", description="Schema name")
    fields: list[FieldSpec] = Field(..., min_length=2, description="Fields in feature order")
    columns: list[str] | None = Field(None, description="Raw column order for flow tables without a header row")

    @model_validator(mode="after")
    def _check_fields(self) -> "FeatureSchema":
        labels = [f.name for f in self.fields if f.role == FieldRole.LABEL]
        if len(labels) != 1:
            raise ValueError(f"exactly one field must have role=label, found {len(labels)}")
        names = [f.name for f in self.fields]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate field names: {duplicates}")
        if self.columns is not None:
            missing = [n for n in names if n not in self.columns]
            if missing:
                raise ValueError(f"columns list misses schema fields: {missing}")
        return self

    @property
    def label_field(self) -> str:
        return next(f.name for f in self.fields if f.role == FieldRole.LABEL)

    @property
    def feature_fields(self) -> list[FieldSpec]:
        return [f for f in self.fields if f.role == FieldRole.FEATURE]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.feature_fields]

    @property
    def discrete_names(self) -> list[str]:
        return [f.name for f in self.feature_fields if f.kind == FieldKind.DISCRETE]

    @property
    def continuous_names(self) -> list[str]:
        return [f.name for f in self.feature_fields if f.kind == FieldKind.CONTINUOUS]

    @property
    def n_features(self) -> int:
        return len(self.feature_fields)

    @classmethod
    def from_file(cls, path: Path) -> "FeatureSchema":
        """Load a schema from a TOML file with a [[fields]] array.

        :param path: Path to the schema file
        :returns: Validated FeatureSchema
        """
        if not path.exists():
            raise SchemaError(f"Schema file not found: {path}")
        try:
            with open(path, "rb") as f:
                data: dict[str, Any] = tomllib.load(f)
            return cls.model_validate(data)
        except (tomllib.TOMLDecodeError, ValidationError) as e:
            raise SchemaError(f"Invalid schema file {path}: {e}") from e


class Codebook(BaseModel):
    """Fixed mapping between the legal categories of one discrete field and scalar codes."""

    model_config = ConfigDict(frozen=True)

    field_name: str
    legal_values: list[str] = Field(..., min_length=1)
    codes: list[float] = Field(..., min_length=1)
    oov_code: float

    @model_validator(mode="after")
    def _check_codes(self) -> "Codebook":
        if len(self.legal_values) != len(self.codes):
            raise ValueError(f"{self.field_name}: {len(self.legal_values)} values but {len(self.codes)} codes")
        if len(set(self.legal_values)) != len(self.legal_values):
            raise ValueError(f"{self.field_name}: legal values are not distinct")
        if any(b <= a for a, b in zip(self.codes, self.codes[1:], strict=False)):
            raise ValueError(f"{self.field_name}: codes must be strictly increasing")
        if self.oov_code in self.codes:
            raise ValueError(f"{self.field_name}: oov_code {self.oov_code} collides with a legal code")
        if any(abs(c) > 1.0 for c in [*self.codes, self.oov_code]):
            raise ValueError(f"{self.field_name}: codes must lie in [-1, 1]")
        return self

    @property
    def size(self) -> int:
        return len(self.codes)

    def encode(self, values: pd.Series) -> np.ndarray:
        """Table lookup; categories unseen at fit time map to the OOV code."""
        lookup = dict(zip(self.legal_values, self.codes, strict=True))
        return values.map(lookup).fillna(self.oov_code).to_numpy(dtype=np.float64)

    def decode(self, cells: np.ndarray, oov_token: str) -> list[str]:
        """Map each cell to the category of the nearest code, or to the OOV sentinel."""
        candidates = np.asarray([*self.codes, self.oov_code], dtype=np.float64)
        nearest = np.abs(cells[:, None] - candidates[None, :]).argmin(axis=1)
        labels = [*self.legal_values, oov_token]
        return [labels[i] for i in nearest]

    def is_legal(self, cells: np.ndarray, allow_oov: bool = True) -> np.ndarray:
        allowed = [*self.codes, self.oov_code] if allow_oov else list(self.codes)
        return np.isclose(cells[:, None], np.asarray(allowed)[None, :], rtol=0.0, atol=CODE_TOLERANCE).any(axis=1)


class Scaler(BaseModel):
    """Min-max scaling of one continuous field to [-1, 1]."""

    model_config = ConfigDict(frozen=True)

    field_name: str
    raw_min: float
    raw_max: float

    @model_validator(mode="after")
    def _check_range(self) -> "Scaler":
        if not self.raw_min <= self.raw_max:
            raise ValueError(f"{self.field_name}: raw_min {self.raw_min} > raw_max {self.raw_max}")
        return self

    def encode(self, values: np.ndarray) -> np.ndarray:
        span = self.raw_max - self.raw_min
        if span == 0.0:
            return np.zeros_like(values, dtype=np.float64)
        return np.clip(2.0 * (values - self.raw_min) / span - 1.0, -1.0, 1.0)

    def decode(self, cells: np.ndarray) -> np.ndarray:
        span = self.raw_max - self.raw_min
        return self.raw_min + (cells + 1.0) / 2.0 * span


class RawDataset(BaseModel):
    """Flow rows keyed by schema feature order, with normalized class names."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frame: pd.DataFrame = Field(..., description="Feature columns in schema order; discrete as str, continuous as float64")
    labels: pd.Series = Field(..., description="Normalized class name per row")
    split_tag: str = Field("train", description="Split identity, 'train' or 'test'")

    @model_validator(mode="after")
    def _check_lengths(self) -> "RawDataset":
        if len(self.frame) != len(self.labels):
            raise ValueError(f"{len(self.frame)} feature rows but {len(self.labels)} labels")
        return self

    @property
    def n_rows(self) -> int:
        return len(self.frame)


class EncodedDataset(BaseModel):
    """Row-major matrix of F features in [-1, 1] plus integer class labels."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    features: np.ndarray = Field(..., description="(n_rows, F) float64 matrix")
    labels: np.ndarray = Field(..., description="(n_rows,) int64 class indices")
    class_names: list[str] = Field(..., min_length=1)
    feature_names: list[str] = Field(..., min_length=1)
    provenance: np.ndarray = Field(..., description="(n_rows,) uint8, 0 real and 1 synthetic")
    split_tag: str = "train"

    @model_validator(mode="after")
    def _check_invariants(self) -> "EncodedDataset":
        if self.features.ndim != 2 or self.features.shape[1] != len(self.feature_names):
            raise ValueError(f"features shape {self.features.shape} does not match {len(self.feature_names)} feature names")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.provenance.shape != (n,):
            raise ValueError(f"labels {self.labels.shape} / provenance {self.provenance.shape} do not match {n} rows")
        if n:
            if self.features.min() < -1.0 - ENCODED_TOLERANCE or self.features.max() > 1.0 + ENCODED_TOLERANCE:
                raise ValueError("encoded features leave [-1, 1]")
            if self.labels.min() < 0 or self.labels.max() >= len(self.class_names):
                raise ValueError(f"labels outside [0, {len(self.class_names)})")
        return self

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def class_index(self, class_name: str) -> int:
        if class_name not in self.class_names:
            raise DataError(f"Class '{class_name}' not in {self.class_names}")
        return self.class_names.index(class_name)

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels, minlength=len(self.class_names))
        return {name: int(c) for name, c in zip(self.class_names, counts, strict=True)}

    def rows_of(self, class_name: str) -> "EncodedDataset":
        return self.subset(self.labels == self.class_index(class_name))

    def subset(self, mask: np.ndarray) -> "EncodedDataset":
        return self.model_copy(
            update={"features": self.features[mask], "labels": self.labels[mask], "provenance": self.provenance[mask]},
        )


class AugmentedDataset(EncodedDataset):
    """Encoded training set merged with synthetic rows."""

    checkpoint_ids: dict[str, str] = Field(default_factory=dict, description="Class name -> digest of the generator checkpoint used")
