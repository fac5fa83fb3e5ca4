from src.config import Settings, get_settings
from src.exceptions import ClassifierError
from src.schemas.evaluation.models import ClassifierSpec, IdsKind

from .classifier import IdsClassifier


def make_classifier(kind: IdsKind | str, n_features: int, n_classes: int, seed: int, settings: Settings | None = None) -> IdsClassifier:
    """Factory function to create an untrained IDS classifier.

    :param kind: IDS preset kind
    :param n_features: Encoded feature width
    :param n_classes: Number of output classes
    :param seed: Initialization, shuffling and dropout seed
    :param settings: Optional Settings instance
    :returns: IdsClassifier instance
    """
    if settings is None:
        settings = get_settings()
    try:
        kind = IdsKind(kind)
    except ValueError as e:
        raise ClassifierError(f"Unknown IDS kind '{kind}', expected one of {[k.value for k in IdsKind]}") from e
    spec = ClassifierSpec(kind=kind, input_width=n_features, n_classes=n_classes, epochs=settings.ids.epochs, seed=seed)
    return IdsClassifier(spec, batch_size=settings.ids.batch_size, learning_rate=settings.ids.learning_rate)
