import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from src.exceptions import DataError, LeakageError
from src.schemas.flows.models import Codebook, EncodedDataset, FeatureSchema, Provenance, RawDataset, Scaler

logger = logging.getLogger(__name__)


def _require_train(dataset: RawDataset) -> None:
    if dataset.split_tag != "train":
        logger.error(f"Refusing to fit on a dataset tagged '{dataset.split_tag}'")
        raise LeakageError(f"Codebooks and scalers are fitted on the training split only, got split_tag='{dataset.split_tag}'")


def oov_code_for(codes: list[float]) -> float:
    """Midpoint of the widest gap between adjacent codes; 0.5 for a single code."""
    if len(codes) == 1:
        return 0.5
    gaps = np.diff(codes)
    i = int(np.argmax(gaps))
    return float((codes[i] + codes[i + 1]) / 2.0)


def fit_codebooks(train: RawDataset, schema: FeatureSchema) -> list[Codebook]:
    """Build one evenly spaced codebook per discrete field from the training values.

    :param train: Training split
    :param schema: Feature schema
    :returns: Codebooks in schema order
    """
    _require_train(train)
    codebooks = []
    for name in schema.discrete_names:
        values = sorted(set(train.frame[name].astype(str)))
        if not values:
            raise DataError(f"Discrete field '{name}' has no observed training values")
        codes = [0.0] if len(values) == 1 else [float(c) for c in np.linspace(-1.0, 1.0, len(values))]
        codebooks.append(Codebook(field_name=name, legal_values=values, codes=codes, oov_code=oov_code_for(codes)))
        logger.debug(f"Codebook {name}: K={len(values)}")
    return codebooks


def fit_scalers(train: RawDataset, schema: FeatureSchema) -> list[Scaler]:
    _require_train(train)
    return [
        Scaler(field_name=name, raw_min=float(train.frame[name].min()), raw_max=float(train.frame[name].max()))
        for name in schema.continuous_names
    ]


class FlowCodec(BaseModel):
    """Fitted codebooks and scalers plus the class order of one preprocessing run."""

    schema_: FeatureSchema = Field(..., alias="schema")
    codebooks: list[Codebook]
    scalers: list[Scaler]
    class_names: list[str] = Field(..., min_length=1)
    oov_token: str = "<oov>"

    @classmethod
    def fit(cls, train: RawDataset, schema: FeatureSchema, class_order: list[str] | None = None, oov_token: str = "<oov>") -> "FlowCodec":
        """Fit on the training split; class order defaults to sorted training labels."""
        class_names = list(class_order) if class_order else sorted(train.labels.unique())
        codec = cls(
            schema=schema,
            codebooks=fit_codebooks(train, schema),
            scalers=fit_scalers(train, schema),
            class_names=class_names,
            oov_token=oov_token,
        )
        logger.info(f"Fitted {len(codec.codebooks)} codebooks and {len(codec.scalers)} scalers over {len(class_names)} classes")
        return codec

    @property
    def feature_names(self) -> list[str]:
        return self.schema_.feature_names

    def codebook(self, field_name: str) -> Codebook:
        return next(cb for cb in self.codebooks if cb.field_name == field_name)

    def discrete_columns(self) -> list[int]:
        return [self.feature_names.index(cb.field_name) for cb in self.codebooks]

    def continuous_columns(self) -> list[int]:
        return [self.feature_names.index(sc.field_name) for sc in self.scalers]

    def encode(self, raw: RawDataset) -> EncodedDataset:
        return encode(raw, self.codebooks, self.scalers, self.class_names, self.feature_names)

    def decode(self, encoded: EncodedDataset) -> RawDataset:
        return decode(encoded, self.codebooks, self.scalers, self.oov_token)

    def illegal_cells(self, encoded: EncodedDataset, allow_oov: bool = True) -> int:
        """Count discrete cells that are not a codebook code."""
        total = 0
        for column, cb in zip(self.discrete_columns(), self.codebooks, strict=True):
            total += int((~cb.is_legal(encoded.features[:, column], allow_oov=allow_oov)).sum())
        return total

    def save(self, path: Path) -> None:
        path.write_text(self.model_dump_json(by_alias=True, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "FlowCodec":
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except (OSError, ValidationError) as e:
            raise DataError(f"Cannot read codec file {path}: {e}") from e


def encode(
    raw: RawDataset,
    codebooks: list[Codebook],
    scalers: list[Scaler],
    class_names: list[str],
    feature_names: list[str] | None = None,
) -> EncodedDataset:
    """Map raw rows into model space.

    Continuous fields are min-max scaled and clamped to [-1, 1]; discrete fields use their codebook,
    unseen categories falling back to the OOV code.
    """
    feature_names = feature_names or list(raw.frame.columns)
    matrix = np.zeros((raw.n_rows, len(feature_names)), dtype=np.float64)
    for cb in codebooks:
        matrix[:, feature_names.index(cb.field_name)] = cb.encode(raw.frame[cb.field_name].astype(str))
    for sc in scalers:
        matrix[:, feature_names.index(sc.field_name)] = sc.encode(raw.frame[sc.field_name].to_numpy(dtype=np.float64))

    index = {name: i for i, name in enumerate(class_names)}
    unknown = sorted(set(raw.labels) - set(index))
    if unknown:
        raise DataError(f"Labels {unknown} are not among the fitted classes {class_names}")
    labels = raw.labels.map(index).to_numpy(dtype=np.int64)

    return EncodedDataset(
        features=matrix,
        labels=labels,
        class_names=list(class_names),
        feature_names=list(feature_names),
        provenance=np.full(raw.n_rows, Provenance.REAL.value, dtype=np.uint8),
        split_tag=raw.split_tag,
    )


def decode(encoded: EncodedDataset, codebooks: list[Codebook], scalers: list[Scaler], oov_token: str = "<oov>") -> RawDataset:
    """Inverse of `encode`: affine inverse on continuous fields, nearest code on discrete fields."""
    columns: dict[str, object] = {}
    by_name = {cb.field_name: cb for cb in codebooks} | {sc.field_name: sc for sc in scalers}
    for i, name in enumerate(encoded.feature_names):
        transform = by_name[name]
        cells = encoded.features[:, i]
        columns[name] = transform.decode(cells, oov_token) if isinstance(transform, Codebook) else transform.decode(cells)
    labels = pd.Series([encoded.class_names[i] for i in encoded.labels], dtype=str)
    return RawDataset(frame=pd.DataFrame(columns, columns=encoded.feature_names), labels=labels, split_tag=encoded.split_tag)
