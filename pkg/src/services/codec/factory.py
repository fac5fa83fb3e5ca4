from src.config import Settings, get_settings

from .loader import FlowTableLoader
from .presets import DatasetPreset


def make_flow_loader(settings: Settings | None = None, preset: DatasetPreset | None = None) -> FlowTableLoader:
    """Create a flow table loader from codec settings.

    :param settings: Optional Settings instance
    :param preset: When given, its non-finite policy replaces the configured one
    :returns: FlowTableLoader instance
    """
    if settings is None:
        settings = get_settings()
    return FlowTableLoader(
        delimiter=settings.codec.delimiter,
        encoding=settings.codec.encoding,
        non_finite=preset.non_finite if preset is not None else settings.codec.non_finite,
    )
