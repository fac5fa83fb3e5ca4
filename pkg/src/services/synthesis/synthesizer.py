import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import torch

from src.exceptions import CheckpointError, DataError, PlanError
from src.schemas.flows.models import AugmentedDataset, EncodedDataset, Provenance
from src.schemas.flows.plan import AugmentationPlan
from src.services.codec.transform import FlowCodec
from src.services.gan.checkpoint import load_checkpoint, restore_models
from src.services.gan.factory import field_codes_for
from src.services.gan.rng import SeedStreams, substream_seed
from src.services.manifest import sha256_file

logger = logging.getLogger(__name__)

GENERATION_CHUNK = 4096


def generate_class(checkpoint_path: Path, n: int, seed: int, codec: FlowCodec | None = None) -> np.ndarray:
    """Sample `n` encoded rows in hard mode at the checkpoint's final temperature.

    Discrete cells are the float64 codebook codes selected by the generator, so they match the
    codebook exactly.

    :param checkpoint_path: GMAC checkpoint of a trained generator
    :param n: Number of rows
    :param seed: Sampling seed
    :param codec: When given, the checkpoint's feature layout must match it
    :returns: (n, F) float64 matrix
    """
    if n < 0:
        raise ValueError(f"Row count must be >= 0, got {n}")
    checkpoint = load_checkpoint(checkpoint_path)
    meta = checkpoint.meta
    if codec is not None:
        if meta.feature_names != codec.feature_names or meta.field_codes != field_codes_for(codec):
            raise CheckpointError(f"Checkpoint {checkpoint_path.name} was trained on a different schema or codebook")

    n_features = len(meta.field_codes)
    if n == 0:
        return np.zeros((0, n_features), dtype=np.float64)

    generator = restore_models(checkpoint).generator.eval()
    dtype = next(generator.parameters()).dtype
    streams = SeedStreams(seed)
    codes = [np.asarray(c, dtype=np.float64) for c in meta.field_codes if c is not None]
    chunks = []
    with torch.no_grad():
        for start in range(0, n, GENERATION_CHUNK):
            size = min(GENERATION_CHUNK, n - start)
            z = torch.randn(size, meta.config.z_dim, generator=streams.torch("latent"), dtype=dtype)
            out = generator(z, meta.tau, hard=True, generator=streams.torch("gumbel"))
            rows = out.samples.numpy().astype(np.float64)
            for j, column in enumerate(generator.discrete_columns):
                rows[:, column] = codes[j][out.indices[j].numpy()]
            chunks.append(rows)
    rows = np.clip(np.vstack(chunks), -1.0, 1.0)
    logger.info(f"Generated {n} rows for class '{meta.class_name}' from {checkpoint_path.name}")
    return rows


def _generate_job(args: tuple[Path, int, int, FlowCodec | None]) -> np.ndarray:
    path, n, seed, codec = args
    return generate_class(path, n, seed, codec=codec)


def assemble(
    train: EncodedDataset,
    plan: AugmentationPlan,
    checkpoints: dict[str, Path],
    seed: int,
    codec: FlowCodec | None = None,
    jobs: int = 1,
) -> AugmentedDataset:
    """Merge the real training rows with per-class synthetic rows so class counts hit the plan targets.

    Real rows come first in their original order, then synthetic rows grouped by class in class order.

    :param train: Real training split
    :param plan: Augmentation plan over the training classes
    :param checkpoints: Class name -> generator checkpoint, required for every augmented class
    :param seed: Base sampling seed; each class samples from its own derived seed
    :param codec: Optional codec used to verify layouts and legal codes
    :param jobs: Worker processes for per-class generation
    :returns: AugmentedDataset
    """
    counts = train.class_counts()
    for name, entry in plan.entries.items():
        if counts.get(name, -1) != entry.original_count:
            raise PlanError(f"Plan expects {entry.original_count} rows of '{name}', training split has {counts.get(name, 0)}")
    augmented = [name for name in train.class_names if name in plan.augmented_classes]
    missing = [name for name in augmented if name not in checkpoints]
    if missing:
        raise PlanError(f"No generator checkpoint for augmented class(es): {', '.join(missing)}")

    requests = [(checkpoints[name], plan.entries[name].synthetic_count, substream_seed(seed, f"class/{name}")) for name in augmented]
    for name, (path, _, _) in zip(augmented, requests, strict=True):
        trained_on = load_checkpoint(path).meta.class_name
        if trained_on and trained_on != name:
            raise CheckpointError(f"Checkpoint {path.name} was trained on class '{trained_on}', not '{name}'")

    if jobs > 1 and len(requests) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            synthetic = list(pool.map(_generate_job, [(*request, codec) for request in requests]))
    else:
        synthetic = [generate_class(*request, codec=codec) for request in requests]

    features = np.vstack([train.features, *synthetic]) if synthetic else train.features.copy()
    labels = np.concatenate(
        [train.labels, *[np.full(len(rows), train.class_index(name), dtype=np.int64) for name, rows in zip(augmented, synthetic, strict=True)]]
    )
    provenance = np.concatenate([train.provenance, np.full(len(features) - train.n_rows, Provenance.SYNTHETIC.value, dtype=np.uint8)])
    result = AugmentedDataset(
        features=features,
        labels=labels,
        class_names=train.class_names,
        feature_names=train.feature_names,
        provenance=provenance.astype(np.uint8),
        split_tag=train.split_tag,
        checkpoint_ids={name: sha256_file(checkpoints[name]) for name in augmented},
    )

    final = result.class_counts()
    wrong = {name: (final[name], entry.target_count) for name, entry in plan.entries.items() if final[name] != entry.target_count}
    if wrong:
        raise PlanError(f"Augmented counts differ from the plan targets: {wrong}")
    if codec is not None:
        illegal = codec.illegal_cells(result.subset(result.provenance == Provenance.SYNTHETIC.value), allow_oov=False)
        if illegal:
            raise DataError(f"{illegal} synthetic discrete cells are not codebook codes")
    logger.info(f"Assembled {result.n_rows} rows ({result.n_rows - train.n_rows} synthetic) across {len(augmented)} augmented classes")
    return result


def export_raw(dataset: AugmentedDataset, codec: FlowCodec, path: Path) -> None:
    """Decode to raw values and write a delimiter-separated file with label and provenance columns."""
    raw = codec.decode(dataset)
    frame = raw.frame.copy()
    frame[codec.schema_.label_field] = raw.labels.to_numpy()
    frame["provenance"] = np.where(dataset.provenance == Provenance.SYNTHETIC.value, "synthetic", "real")
    frame.to_csv(path, index=False)
