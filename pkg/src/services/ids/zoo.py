import logging

import torch
from torch import nn

from src.exceptions import ClassifierError
from src.schemas.evaluation.models import IdsKind

logger = logging.getLogger(__name__)


def _pool(kernel: int, length: int) -> tuple[nn.Module, int]:
    """Max-pool with ceil mode; kernel 1 and sequences shorter than the window pass through."""
    if kernel <= 1 or length < kernel:
        return nn.Identity(), length
    return nn.MaxPool1d(kernel, ceil_mode=True), -(-length // kernel)


def _conv_block(in_channels: int, out_channels: int, kernel: int, pool: int, length: int) -> tuple[nn.Sequential, int]:
    pooling, length = _pool(pool, length)
    block = nn.Sequential(
        nn.Conv1d(in_channels, out_channels, kernel, padding="same"),
        nn.BatchNorm1d(out_channels),
        nn.ReLU(),
        pooling,
    )
    return block, length


class DenseIds(nn.Module):
    """Two dense layers of 32 and 16 units."""

    def __init__(self, n_features: int, n_classes: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(n_features, 32), nn.ReLU(), nn.Linear(32, 16), nn.ReLU(), nn.Linear(16, n_classes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class ConvIds(nn.Module):
    """Two Conv1d layers of 64 filters (kernel 5) with batch norm, max-pool 3 after the first, then dense 16."""

    def __init__(self, n_features: int, n_classes: int):
        super().__init__()
        first, length = _conv_block(1, 64, 5, 3, n_features)
        second, length = _conv_block(64, 64, 5, 1, length)
        self.features = nn.Sequential(first, second)
        self.head = nn.Sequential(nn.Flatten(), nn.Linear(64 * length, 16), nn.ReLU(), nn.Linear(16, n_classes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x.unsqueeze(1)))


class RecurrentIds(nn.Module):
    """Two stacked LSTM layers of 64 units, dropout 0.2, dense 32."""

    def __init__(self, n_features: int, n_classes: int):
        super().__init__()
        self.lstm = nn.LSTM(input_size=1, hidden_size=64, num_layers=2, batch_first=True)
        self.head = nn.Sequential(nn.Dropout(0.2), nn.Linear(64, 32), nn.ReLU(), nn.Linear(32, n_classes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.lstm(x.unsqueeze(-1))
        return self.head(out[:, -1])


class ConvLstmIds(nn.Module):
    """Conv 64 + pool 2, conv 128 + pool 2 (batch norm each), LSTM 100, dropout 0.2 on the LSTM output and before the head."""

    def __init__(self, n_features: int, n_classes: int, kernel: int = 3):
        super().__init__()
        first, length = _conv_block(1, 64, kernel, 2, n_features)
        second, _ = _conv_block(64, 128, kernel, 2, length)
        self.features = nn.Sequential(first, second)
        self.lstm = nn.LSTM(input_size=128, hidden_size=100, batch_first=True)
        self.lstm_dropout = nn.Dropout(0.2)
        self.head = nn.Sequential(nn.Dropout(0.2), nn.Linear(100, n_classes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.lstm(self.features(x.unsqueeze(1)).transpose(1, 2))
        return self.head(self.lstm_dropout(out)[:, -1])


class ConvBiLstmIds(nn.Module):
    """Conv 32 + pool 2 with batch norm, BiLSTM 32, dropout 0.2, dense 25."""

    def __init__(self, n_features: int, n_classes: int, kernel: int = 3):
        super().__init__()
        self.features, _ = _conv_block(1, 32, kernel, 2, n_features)
        self.lstm = nn.LSTM(input_size=32, hidden_size=32, batch_first=True, bidirectional=True)
        self.head = nn.Sequential(nn.Dropout(0.2), nn.Linear(64, 25), nn.ReLU(), nn.Linear(25, n_classes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.lstm(self.features(x.unsqueeze(1)).transpose(1, 2))
        return self.head(out[:, -1])


ARCHITECTURES: dict[IdsKind, type[nn.Module]] = {
    IdsKind.DNN: DenseIds,
    IdsKind.CNN: ConvIds,
    IdsKind.LSTM: RecurrentIds,
    IdsKind.CNN_LSTM: ConvLstmIds,
    IdsKind.CNN_BILSTM: ConvBiLstmIds,
}


def build(kind: IdsKind | str, n_features: int, n_classes: int, seed: int) -> nn.Module:
    """Construct an untrained classifier; weights depend only on `seed`.

    :param kind: One of cnn, dnn, lstm, cnn_bilstm, cnn_lstm
    :param n_features: Input width F
    :param n_classes: Output classes
    :param seed: Initialization seed
    :returns: Module emitting class logits
    """
    try:
        kind = IdsKind(kind)
    except ValueError as e:
        raise ClassifierError(f"Unknown IDS kind '{kind}', expected one of {[k.value for k in IdsKind]}") from e
    if n_features < 1 or n_classes < 2:
        raise ClassifierError(f"Need F >= 1 and n_classes >= 2, got F={n_features}, n_classes={n_classes}")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ARCHITECTURES[kind](n_features, n_classes)
    logger.debug(f"Built {kind.value} IDS for F={n_features}, {n_classes} classes")
    return model
