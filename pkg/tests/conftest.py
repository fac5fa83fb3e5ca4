import numpy as np
import pandas as pd
import pytest

from src.config import TrainingConfig
from src.schemas.flows.models import EncodedDataset, FeatureSchema, FieldKind, FieldRole, FieldSpec, RawDataset
from src.services.codec.transform import FlowCodec

TOY_CLASSES = ["Normal", "DoS", "Probe"]


@pytest.fixture
def toy_schema() -> FeatureSchema:
    """F=3: one discrete field with two categories and two continuous fields."""
    return FeatureSchema(
        name="toy",
        fields=[
            FieldSpec(name="proto", kind=FieldKind.DISCRETE),
            FieldSpec(name="bytes", kind=FieldKind.CONTINUOUS),
            FieldSpec(name="duration", kind=FieldKind.CONTINUOUS),
            FieldSpec(name="label", kind=FieldKind.DISCRETE, role=FieldRole.LABEL),
        ],
    )


@pytest.fixture
def toy_raw() -> RawDataset:
    rng = np.random.default_rng(7)
    labels = ["Normal"] * 8 + ["DoS"] * 6 + ["Probe"] * 4
    frame = pd.DataFrame(
        {
            "proto": ["tcp" if i % 3 else "udp" for i in range(len(labels))],
            "bytes": np.round(rng.uniform(0.0, 1000.0, len(labels)), 2),
            "duration": np.round(rng.uniform(0.0, 10.0, len(labels)), 3),
        }
    )
    return RawDataset(frame=frame, labels=pd.Series(labels, dtype=str), split_tag="train")


@pytest.fixture
def toy_csv(tmp_path, toy_raw):
    """The toy rows written as a headed flow table."""
    path = tmp_path / "toy.csv"
    frame = toy_raw.frame.copy()
    frame["label"] = toy_raw.labels
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def toy_codec(toy_raw, toy_schema) -> FlowCodec:
    return FlowCodec.fit(toy_raw, toy_schema, class_order=TOY_CLASSES)


@pytest.fixture
def toy_encoded(toy_codec, toy_raw) -> EncodedDataset:
    return toy_codec.encode(toy_raw)


@pytest.fixture
def toy_field_codes() -> list[list[float] | None]:
    return [[-1.0, 1.0], None, None]


@pytest.fixture
def small_config() -> TrainingConfig:
    """Tiny float64 networks for fast deterministic training tests."""
    return TrainingConfig.model_validate(
        {
            "epochs": 3,
            "batch_size": 4,
            "z_dim": 4,
            "d_model": 4,
            "d_key": 4,
            "generator_hidden": (16,),
            "critic_hidden": (16, 16),
            "ae_hidden": 8,
            "ae_bottleneck": 2,
            "gate_hidden": 4,
            "swd_projections": 8,
            "swd_samples": 8,
            "checkpoint_every": 1,
            "log_every": 1,
            "dtype": "float64",
        }
    )


def make_encoded(features: np.ndarray, labels: np.ndarray, class_names: list[str], split_tag: str = "train") -> EncodedDataset:
    features = np.asarray(features, dtype=np.float64)
    return EncodedDataset(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        class_names=class_names,
        feature_names=[f"f{i}" for i in range(features.shape[1])],
        provenance=np.zeros(len(features), dtype=np.uint8),
        split_tag=split_tag,
    )


@pytest.fixture
def blob_splits() -> tuple[EncodedDataset, EncodedDataset]:
    """Three well separated Gaussian classes in 6 dimensions, train and test."""
    rng = np.random.default_rng(3)
    centers = np.array([[-0.6] * 6, [0.6] * 6, [0.6, -0.6] * 3])

    def draw(per_class: int, tag: str) -> EncodedDataset:
        labels = np.repeat(np.arange(3), per_class)
        features = np.clip(centers[labels] + rng.normal(0.0, 0.08, (len(labels), 6)), -1.0, 1.0)
        return make_encoded(features, labels, TOY_CLASSES, tag)

    return draw(40, "train"), draw(20, "test")
