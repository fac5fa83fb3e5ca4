import json
import logging
import struct
from pathlib import Path

import numpy as np

from src.exceptions import ContainerFormatError
from src.schemas.flows.models import AugmentedDataset, EncodedDataset
from src.services.manifest import sha256_bytes

logger = logging.getLogger(__name__)

MAGIC = b"FSE1"
_HEADER = struct.Struct("<4sII")


def dump_encoded(dataset: EncodedDataset) -> bytes:
    """Serialize to the FSE1 layout.

    Magic, u32 n_rows, u32 F, row-major f32 features, u32 labels, then a UTF-8 JSON footer
    with class names, feature names, split tag, provenance flags and checkpoint ids.
    """
    footer = {
        "class_names": dataset.class_names,
        "feature_names": dataset.feature_names,
        "split_tag": dataset.split_tag,
        "provenance": "".join(str(int(p)) for p in dataset.provenance),
        "checkpoint_ids": getattr(dataset, "checkpoint_ids", {}),
    }
    return b"".join(
        [
            _HEADER.pack(MAGIC, dataset.n_rows, dataset.n_features),
            np.ascontiguousarray(dataset.features, dtype="<f4").tobytes(),
            np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes(),
            json.dumps(footer, sort_keys=True).encode("utf-8"),
        ]
    )


def load_encoded(blob: bytes) -> AugmentedDataset:
    if len(blob) < _HEADER.size:
        raise ContainerFormatError("Truncated FSE1 container")
    magic, n_rows, n_features = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ContainerFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")

    offset = _HEADER.size
    matrix_bytes = n_rows * n_features * 4
    if len(blob) < offset + matrix_bytes + n_rows * 4:
        raise ContainerFormatError(f"Container too short for {n_rows}x{n_features} rows")
    features = np.frombuffer(blob, dtype="<f4", count=n_rows * n_features, offset=offset).reshape(n_rows, n_features)
    offset += matrix_bytes
    labels = np.frombuffer(blob, dtype="<u4", count=n_rows, offset=offset)
    offset += n_rows * 4

    try:
        footer = json.loads(blob[offset:].decode("utf-8"))
        provenance = np.frombuffer(footer["provenance"].encode("ascii"), dtype=np.uint8) - ord("0")
        return AugmentedDataset(
            features=features.astype(np.float64),
            labels=labels.astype(np.int64),
            class_names=footer["class_names"],
            feature_names=footer["feature_names"],
            provenance=provenance.astype(np.uint8),
            split_tag=footer["split_tag"],
            checkpoint_ids=footer.get("checkpoint_ids", {}),
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError) as e:
        raise ContainerFormatError(f"Invalid FSE1 footer: {e}") from e


def write_encoded(path: Path, dataset: EncodedDataset) -> str:
    """Write a dataset container and return its sha256 digest."""
    blob = dump_encoded(dataset)
    path.write_bytes(blob)
    logger.info(f"Wrote {dataset.n_rows} rows ({dataset.split_tag}) to {path}")
    return sha256_bytes(blob)


def read_encoded(path: Path) -> AugmentedDataset:
    if not path.exists():
        raise ContainerFormatError(f"Container not found: {path}")
    return load_encoded(path.read_bytes())
