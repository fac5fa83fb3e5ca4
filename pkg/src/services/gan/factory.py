from src.config import Settings, TrainingConfig, get_settings
from src.services.codec.transform import FlowCodec

from .networks import FieldCodes
from .trainer import GanTrainer


def field_codes_for(codec: FlowCodec) -> FieldCodes:
    """Per-feature codebook codes in schema order, None for continuous features."""
    codes = {cb.field_name: list(cb.codes) for cb in codec.codebooks}
    return [codes.get(name) for name in codec.feature_names]


def make_gan_trainer(
    codec: FlowCodec,
    class_name: str,
    settings: Settings | None = None,
    config: TrainingConfig | None = None,
    seed: int | None = None,
) -> GanTrainer:
    """Build a per-class trainer from settings.

    :param codec: Fitted codec giving the feature layout and codebooks
    :param class_name: Class whose real rows the generator learns
    :param settings: Optional Settings instance
    :param config: Training config overriding `settings.gan`
    :param seed: Run seed overriding `settings.seed`
    :returns: GanTrainer instance
    """
    if settings is None:
        settings = get_settings()
    return GanTrainer(
        config=config or settings.gan,
        field_codes=field_codes_for(codec),
        seed=settings.seed if seed is None else seed,
        class_name=class_name,
        feature_names=codec.feature_names,
    )
