import logging

import numpy as np
from sklearn.model_selection import train_test_split

from src.exceptions import DataError, ProtocolError
from src.schemas.flows.models import EncodedDataset, RawDataset

logger = logging.getLogger(__name__)

BINARY_CLASSES = ["Normal", "Abnormal"]


def collapse_binary(labels: np.ndarray, class_names: list[str], normal_class: str) -> tuple[np.ndarray, list[str]]:
    """Relabel to Normal (0) / Abnormal (1), preserving row order."""
    if normal_class not in class_names:
        raise DataError(f"Normal class '{normal_class}' not in {class_names}")
    normal_index = class_names.index(normal_class)
    return (np.asarray(labels) != normal_index).astype(np.int64), list(BINARY_CLASSES)


def binary_view(dataset: EncodedDataset, normal_class: str) -> EncodedDataset:
    labels, class_names = collapse_binary(dataset.labels, dataset.class_names, normal_class)
    return dataset.model_copy(update={"labels": labels, "class_names": class_names})


def make_loao_split(train: EncodedDataset, test: EncodedDataset, unknown_class: str, normal_class: str | None = None) -> tuple[EncodedDataset, EncodedDataset]:
    """Remove every row of `unknown_class` from the training split.

    The class is also dropped from the training class list so the classifier never gets an output for it;
    the test split is returned unchanged.

    :returns: (loao_train, loao_test)
    """
    if unknown_class == normal_class:
        raise ProtocolError(f"The normal class '{normal_class}' cannot be the unknown attack")
    if unknown_class not in train.class_names or train.class_counts()[unknown_class] == 0:
        raise ProtocolError(f"Unknown class '{unknown_class}' has no rows in the training split")
    if unknown_class not in test.class_names or test.class_counts()[unknown_class] == 0:
        raise ProtocolError(f"Unknown class '{unknown_class}' has no rows in the test split")

    dropped = train.class_index(unknown_class)
    keep = train.labels != dropped
    remap = np.array([i - (i > dropped) for i in range(len(train.class_names))], dtype=np.int64)
    loao_train = train.model_copy(
        update={
            "features": train.features[keep],
            "labels": remap[train.labels[keep]],
            "provenance": train.provenance[keep],
            "class_names": [c for c in train.class_names if c != unknown_class],
        }
    )
    logger.info(f"LOAO split: removed {int((~keep).sum())} '{unknown_class}' rows, {loao_train.n_rows} training rows remain")
    return loao_train, test


def holdout_split(raw: RawDataset, test_fraction: float, seed: int) -> tuple[RawDataset, RawDataset]:
    """Stratified shuffle split of a single flow table into train and test."""
    index = np.arange(raw.n_rows)
    train_idx, test_idx = train_test_split(index, test_size=test_fraction, random_state=seed, stratify=raw.labels.to_numpy())
    train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)

    def take(rows: np.ndarray, tag: str) -> RawDataset:
        return RawDataset(frame=raw.frame.iloc[rows].reset_index(drop=True), labels=raw.labels.iloc[rows].reset_index(drop=True), split_tag=tag)

    return take(train_idx, "train"), take(test_idx, "test")


def stratified_subsample(dataset: EncodedDataset, n_rows: int, seed: int) -> EncodedDataset:
    """Subsample to about `n_rows` rows preserving class ratios; every present class keeps at least one row."""
    if n_rows >= dataset.n_rows:
        return dataset
    rng = np.random.default_rng(seed)
    mask = np.zeros(dataset.n_rows, dtype=bool)
    for label in np.unique(dataset.labels):
        rows = np.flatnonzero(dataset.labels == label)
        quota = max(1, round(n_rows * len(rows) / dataset.n_rows))
        mask[rng.choice(rows, size=min(quota, len(rows)), replace=False)] = True
    return dataset.subset(mask)
