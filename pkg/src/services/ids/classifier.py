import logging
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, Field
from torch import nn

from src.exceptions import CheckpointError, ClassifierError, ContainerFormatError, NumericAbortError
from src.schemas.evaluation.models import ClassifierSpec
from src.schemas.flows.models import EncodedDataset
from src.services.gan.rng import substream_seed
from src.services.storage import atomic_write, pack_container, unpack_container

from .zoo import build

logger = logging.getLogger(__name__)

MAGIC = b"IDSC"
VERSION = 1
PREDICT_BATCH = 8192


class EpochHistory(BaseModel):
    epoch: int
    loss: float
    accuracy: float


class TrainingHistory(BaseModel):
    epochs: list[EpochHistory] = Field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]


class IdsClassifier:
    """One IDS model with its spec and per-epoch training history."""

    def __init__(self, spec: ClassifierSpec, batch_size: int = 256, learning_rate: float = 1e-3):
        self.spec = spec
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.model: nn.Module = build(spec.kind, spec.input_width, spec.n_classes, spec.seed)
        self.history = TrainingHistory()

    def fit(self, train: EncodedDataset, epochs: int | None = None) -> "IdsClassifier":
        """Cross-entropy training with Adam over seeded shuffled mini-batches; no early stopping.

        :param train: Training split with labels < n_classes
        :param epochs: Defaults to spec.epochs; 0 leaves the initial weights untouched
        :returns: self
        """
        epochs = self.spec.epochs if epochs is None else epochs
        self._check_width(train.n_features)
        if train.n_rows and (train.labels.min() < 0 or train.labels.max() >= self.spec.n_classes):
            raise ClassifierError(f"Labels must lie in [0, {self.spec.n_classes}), got max {train.labels.max()}")
        if epochs == 0:
            return self

        x = torch.as_tensor(train.features, dtype=torch.float32)
        y = torch.as_tensor(train.labels, dtype=torch.long)
        shuffle = torch.Generator().manual_seed(substream_seed(self.spec.seed, "ids/shuffle"))
        optimizer = torch.optim.Adam(self.model.parameters(), lr=self.learning_rate)
        loss_fn = nn.CrossEntropyLoss()

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(substream_seed(self.spec.seed, "ids/dropout"))
            self.model.train()
            for epoch in range(epochs):
                order = torch.randperm(len(x), generator=shuffle)
                total_loss, correct, seen = 0.0, 0, 0
                for start in range(0, len(x), self.batch_size):
                    index = order[start : start + self.batch_size]
                    if len(index) < 2 and seen:
                        # batch norm cannot normalize a single row
                        continue
                    logits = self.model(x[index])
                    loss = loss_fn(logits, y[index])
                    if not torch.isfinite(loss):
                        logger.error(f"Non-finite {self.spec.kind.value} loss at epoch {epoch}")
                        raise NumericAbortError(f"Non-finite classifier loss at epoch {epoch}", record=self.history)
                    optimizer.zero_grad(set_to_none=True)
                    loss.backward()
                    optimizer.step()
                    total_loss += loss.item() * len(index)
                    correct += int((logits.argmax(dim=1) == y[index]).sum())
                    seen += len(index)
                self.history.epochs.append(EpochHistory(epoch=epoch, loss=total_loss / seen, accuracy=correct / seen))
        self.model.eval()
        last = self.history.epochs[-1]
        logger.info(f"Trained {self.spec.kind.value} (seed {self.spec.seed}) for {epochs} epochs: loss={last.loss:.4f} acc={last.accuracy:.4f}")
        return self

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        """Class probabilities per row, batch-norm in inference mode."""
        features = np.asarray(features)
        if features.ndim != 2:
            raise ClassifierError(f"Expected a 2-D feature matrix, got shape {features.shape}")
        self._check_width(features.shape[1])
        self.model.eval()
        chunks = []
        with torch.no_grad():
            for start in range(0, len(features), PREDICT_BATCH):
                batch = torch.as_tensor(features[start : start + PREDICT_BATCH], dtype=torch.float32)
                chunks.append(torch.softmax(self.model(batch).double(), dim=1).numpy())
        return np.vstack(chunks) if chunks else np.zeros((0, self.spec.n_classes))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.predict_scores(features).argmax(axis=1)

    def _check_width(self, width: int) -> None:
        if width != self.spec.input_width:
            raise ClassifierError(f"Input width {width} does not match the classifier's F={self.spec.input_width}")

    def save(self, path: Path) -> None:
        arrays = {name: tensor.detach().cpu().numpy().copy() for name, tensor in self.model.state_dict().items()}
        header = {
            "spec": self.spec.model_dump(mode="json"),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "history": self.history.model_dump(mode="json"),
        }
        atomic_write(path, pack_container(MAGIC, VERSION, header, arrays))

    def write_history(self, path: Path) -> None:
        """Append the per-epoch history to a CSV metrics log, one row per epoch tagged with kind and seed."""
        frame = pd.DataFrame([e.model_dump() for e in self.history.epochs], columns=["epoch", "loss", "accuracy"])
        frame.insert(0, "seed", self.spec.seed)
        frame.insert(0, "kind", self.spec.kind.value)
        if path.exists():
            frame = pd.concat([pd.read_csv(path), frame], ignore_index=True)
        frame.to_csv(path, index=False)
        logger.info(f"Appended {len(self.history.epochs)} epoch(s) of {self.spec.kind.value} history to {path}")

    @classmethod
    def load(cls, path: Path) -> "IdsClassifier":
        if not path.exists():
            raise CheckpointError(f"Classifier file not found: {path}")
        try:
            _, header, arrays = unpack_container(path.read_bytes(), MAGIC, VERSION)
            classifier = cls(ClassifierSpec.model_validate(header["spec"]), header["batch_size"], header["learning_rate"])
            classifier.model.load_state_dict({name: torch.from_numpy(a) for name, a in arrays.items()})
            classifier.history = TrainingHistory.model_validate(header["history"])
        except ContainerFormatError as e:
            raise CheckpointError(f"Cannot read classifier {path}: {e}") from e
        except (KeyError, ValueError, RuntimeError) as e:
            raise CheckpointError(f"Malformed classifier file {path}: {e}") from e
        classifier.model.eval()
        return classifier

