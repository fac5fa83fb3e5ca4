import logging
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd

from src.exceptions import DataError, EmptyDatasetError, RowParseError, SchemaError
from src.schemas.flows.models import FeatureSchema, RawDataset

from .presets import normalize_label

logger = logging.getLogger(__name__)

NON_FINITE_TOKENS = {"nan", "inf", "+inf", "-inf", "infinity", "+infinity", "-infinity"}


class FlowTableLoader:
    """Reads delimiter-separated flow tables into RawDataset objects."""

    def __init__(self, delimiter: str = ",", encoding: str = "utf-8", non_finite: Literal["error", "drop"] = "error"):
        self.delimiter = delimiter
        self.encoding = encoding
        self.non_finite = non_finite

    def load(
        self,
        path: Path,
        schema: FeatureSchema,
        split_tag: str = "train",
        label_map: dict[str, str] | None = None,
        keep_classes: list[str] | None = None,
        known_classes: list[str] | None = None,
    ) -> RawDataset:
        """Load a flow table keyed by schema feature order.

        :param path: Flow table file
        :param schema: Feature schema; `schema.columns` names the columns of header-less files
        :param split_tag: Split identity stored on the result
        :param label_map: Normalized raw label -> class name; unmapped rows are dropped
        :param keep_classes: Class names to keep after mapping; other rows are dropped
        :param known_classes: Preferred spellings for unmapped labels that normalize to the same name
        :returns: RawDataset with at least one row
        """
        if not path.exists():
            logger.error(f"Flow table not found: {path}")
            raise DataError(f"Flow table not found: {path}")

        frame = self._read(path, schema)
        missing = [name for name in [schema.label_field, *schema.feature_names] if name not in frame.columns]
        if missing:
            raise SchemaError(f"{path.name}: missing column(s) {missing}")
        if frame.empty:
            raise EmptyDatasetError("empty dataset")

        features = pd.DataFrame(index=frame.index)
        keep = np.ones(len(frame), dtype=bool)
        for name in schema.discrete_names:
            features[name] = frame[name].str.strip()
        for name in schema.continuous_names:
            values, finite = self._parse_numeric(frame[name], name)
            features[name] = values
            keep &= finite
        features = features[schema.feature_names]

        if not keep.all():
            logger.warning(f"{path.name}: dropped {int((~keep).sum())} rows with non-finite cells")

        labels = frame[schema.label_field]
        if label_map:
            labels = labels.map(lambda raw: label_map.get(normalize_label(raw)))
            unmapped = labels.isna().to_numpy()
            if unmapped.any():
                logger.warning(f"{path.name}: dropped {int((unmapped & keep).sum())} rows with unmapped labels")
            keep &= ~unmapped
        else:
            labels = _unify_spellings(labels, known_classes or keep_classes or [])
        if keep_classes is not None:
            outside = ~labels.isin(keep_classes).to_numpy()
            if (outside & keep).any():
                logger.warning(f"{path.name}: dropped {int((outside & keep).sum())} rows outside {keep_classes}")
            keep &= ~outside

        features = features[keep].reset_index(drop=True)
        labels = labels[keep].reset_index(drop=True).astype(str)
        if features.empty:
            raise EmptyDatasetError("empty dataset")

        logger.info(f"Loaded {len(features)} rows from {path.name} ({split_tag}), {labels.nunique()} classes")
        return RawDataset(frame=features, labels=labels, split_tag=split_tag)

    def _read(self, path: Path, schema: FeatureSchema) -> pd.DataFrame:
        headerless = schema.columns is not None
        try:
            frame = pd.read_csv(
                path,
                sep=self.delimiter,
                encoding=self.encoding,
                header=None if headerless else 0,
                dtype=str,
                keep_default_na=False,
                skipinitialspace=False,
            )
        except pd.errors.EmptyDataError as e:
            raise EmptyDatasetError("empty dataset") from e
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            logger.error(f"Failed to parse {path.name}: {e}")
            raise DataError(f"Failed to parse {path.name}: {e}") from e

        if headerless:
            columns = list(schema.columns or [])
            if frame.shape[1] < len(columns):
                # trailing optional columns such as the difficulty score
                columns = columns[: frame.shape[1]]
            elif frame.shape[1] > len(columns):
                raise SchemaError(f"{path.name}: {frame.shape[1]} columns but the schema lists {len(columns)}")
            frame.columns = columns
        else:
            frame.columns = [str(c).strip() for c in frame.columns]
        return frame

    def _parse_numeric(self, column: pd.Series, name: str) -> tuple[np.ndarray, np.ndarray]:
        stripped = column.str.strip()
        values = pd.to_numeric(stripped, errors="coerce").to_numpy(dtype=np.float64)
        non_finite_token = stripped.str.lower().isin(NON_FINITE_TOKENS).to_numpy()
        bad = np.isnan(values) & ~non_finite_token
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise RowParseError(f"Row {row}: cannot parse '{column.iloc[row]}' in numeric column '{name}'", row_index=row, column=name)

        finite = np.isfinite(values) & ~non_finite_token
        if not finite.all() and self.non_finite == "error":
            row = int(np.flatnonzero(~finite)[0])
            raise RowParseError(f"Row {row}: non-finite value '{column.iloc[row]}' in column '{name}'", row_index=row, column=name)
        return np.where(finite, values, 0.0), finite


def _unify_spellings(labels: pd.Series, known: list[str]) -> pd.Series:
    """Map labels equal up to case and whitespace onto one spelling: a known class name, else the first seen."""
    spelling = {normalize_label(name): name for name in known}
    for raw in labels.unique():
        spelling.setdefault(normalize_label(raw), " ".join(raw.split()))
    return labels.map(lambda raw: spelling[normalize_label(raw)])


def load_flow_table(path: Path, schema: FeatureSchema, split_tag: str = "train", **kwargs) -> RawDataset:
    """Load a comma-separated UTF-8 flow table with default loader settings."""
    return FlowTableLoader().load(path, schema, split_tag=split_tag, **kwargs)
