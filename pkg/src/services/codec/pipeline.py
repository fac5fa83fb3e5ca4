import logging
from dataclasses import dataclass
from pathlib import Path

from src.config import Settings, get_settings
from src.exceptions import ConfigError
from src.schemas.flows.models import EncodedDataset, FeatureSchema

from .factory import make_flow_loader
from .presets import DatasetPreset, resolve_schema
from .splits import holdout_split
from .transform import FlowCodec

logger = logging.getLogger(__name__)


@dataclass
class PreprocessResult:
    codec: FlowCodec
    train: EncodedDataset
    test: EncodedDataset


def preprocess(
    train_path: Path,
    test_path: Path | None = None,
    schema: FeatureSchema | None = None,
    preset: DatasetPreset | None = None,
    settings: Settings | None = None,
) -> PreprocessResult:
    """Load, split and encode a dataset; codebooks and scalers are fitted on the training split only.

    Official splits read the train and test files as given. Without a test file (or under a holdout
    preset) the training file is split with the configured stratified holdout.

    :param train_path: Training flow table, or the only table of holdout datasets
    :param test_path: Official test flow table
    :param schema: Feature schema overriding the preset's
    :param preset: Dataset preset carrying the label map, class order and split rule
    :param settings: Optional Settings instance
    :returns: PreprocessResult with the fitted codec and both encoded splits
    """
    if settings is None:
        settings = get_settings()
    schema = resolve_schema(preset, schema)
    if preset is not None and preset.split_rule == "official" and test_path is None:
        raise ConfigError(f"Preset '{preset.name}' uses an official split; a test file is required")

    loader = make_flow_loader(settings, preset)
    options = {"label_map": preset.label_map or None, "keep_classes": preset.class_order} if preset else {}
    if test_path is None:
        everything = loader.load(train_path, schema, split_tag="train", **options)
        raw_train, raw_test = holdout_split(everything, settings.codec.holdout_fraction, settings.codec.split_seed)
        logger.info(f"Holdout split: {raw_train.n_rows} train / {raw_test.n_rows} test rows")
    else:
        raw_train = loader.load(train_path, schema, split_tag="train", **options)
        raw_test = loader.load(test_path, schema, split_tag="test", known_classes=sorted(raw_train.labels.unique()), **options)

    codec = FlowCodec.fit(raw_train, schema, class_order=preset.class_order if preset else None, oov_token=settings.codec.oov_token)
    return PreprocessResult(codec=codec, train=codec.encode(raw_train), test=codec.encode(raw_test))
