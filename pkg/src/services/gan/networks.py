import logging
import math
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from src.config import TrainingConfig

from .rng import SeedStreams

logger = logging.getLogger(__name__)

# Per feature: the codebook codes of a discrete field, or None for a continuous field
FieldCodes = list[list[float] | None]


def self_attention(h: torch.Tensor, w_q: torch.Tensor, w_k: torch.Tensor, w_v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Single-head scaled dot-product attention across the feature axis.

    :param h: (..., F, d_m) feature tokens
    :returns: (output of shape (..., F, d_m), attention weights of shape (..., F, F))
    """
    q, k, v = h @ w_q, h @ w_k, h @ w_v
    weights = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(w_k.shape[-1]), dim=-1)
    return weights @ v, weights


class FeatureSelfAttention(nn.Module):
    def __init__(self, d_model: int, d_key: int):
        super().__init__()
        if d_key <= 0:
            raise ValueError(f"d_key must be positive, got {d_key}")
        self.w_q = nn.Parameter(torch.empty(d_model, d_key))
        self.w_k = nn.Parameter(torch.empty(d_model, d_key))
        self.w_v = nn.Parameter(torch.empty(d_model, d_model))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        out, _ = self_attention(h, self.w_q, self.w_k, self.w_v)
        return out


def sample_gumbel(shape: tuple[int, ...], generator: torch.Generator | None = None, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Draw standard Gumbel noise -log(-log U)."""
    u = torch.rand(shape, generator=generator, dtype=dtype).clamp_min(torch.finfo(dtype).tiny)
    return -torch.log(-torch.log(u))


def gumbel_softmax(logits: torch.Tensor, gumbel: torch.Tensor, tau: float) -> torch.Tensor:
    """softmax((logits + g) / tau) over the last axis."""
    if not tau > 0:
        raise ValueError(f"Gumbel-Softmax temperature must be > 0, got {tau}")
    return torch.softmax((logits + gumbel) / tau, dim=-1)


def straight_through(y_soft: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """One-hot of the argmax in the forward pass, soft gradients in the backward pass.

    Ties go to the lowest index.

    :returns: (y_hard, argmax indices)
    """
    index = y_soft.argmax(dim=-1)
    y_hard = F.one_hot(index, num_classes=y_soft.shape[-1]).to(y_soft.dtype)
    return y_hard + (y_soft - y_soft.detach()), index


def codebook_project(y: torch.Tensor, codes: torch.Tensor) -> torch.Tensor:
    """<y, v>: the selected code for a one-hot y, the expected code for a probability vector."""
    return (y * codes).sum(dim=-1)


class GeneratorOutput(NamedTuple):
    samples: torch.Tensor
    soft: list[torch.Tensor]
    indices: list[torch.Tensor]


def _mlp(widths: list[int], slope: float) -> nn.Sequential:
    layers: list[nn.Module] = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
        layers += [nn.Linear(fan_in, fan_out), nn.LeakyReLU(slope)]
    return nn.Sequential(*layers)


class Generator(nn.Module):
    """Discrete-aware generator with feature-wise self-attention.

    z is projected to F tokens of width d_model, mixed by self-attention, flattened through a
    feed-forward stack and split into one logit head per discrete field plus a tanh head for the
    continuous fields. Discrete fields emit codebook codes, selected through Gumbel-Softmax.
    """

    def __init__(self, field_codes: FieldCodes, config: TrainingConfig):
        super().__init__()
        self.n_features = len(field_codes)
        self.z_dim = config.z_dim
        self.d_model = config.d_model
        self.use_attention = config.use_attention
        self.discrete_columns = [i for i, codes in enumerate(field_codes) if codes is not None]
        self.continuous_columns = [i for i, codes in enumerate(field_codes) if codes is None]

        self.project = nn.Linear(config.z_dim, self.n_features * config.d_model)
        self.attention = FeatureSelfAttention(config.d_model, config.d_key)
        self.body = _mlp([self.n_features * config.d_model, *config.generator_hidden], config.leaky_slope)
        hidden = config.generator_hidden[-1] if config.generator_hidden else self.n_features * config.d_model
        self.logit_heads = nn.ModuleList([nn.Linear(hidden, len(field_codes[i] or [])) for i in self.discrete_columns])
        self.continuous_head = nn.Linear(hidden, len(self.continuous_columns)) if self.continuous_columns else None
        for j, i in enumerate(self.discrete_columns):
            self.register_buffer(f"codes_{j}", torch.tensor(field_codes[i], dtype=torch.float64))

    def codes(self, j: int) -> torch.Tensor:
        return getattr(self, f"codes_{j}")

    def forward(
        self,
        z: torch.Tensor,
        tau: float,
        hard: bool = True,
        gumbel: list[torch.Tensor] | None = None,
        generator: torch.Generator | None = None,
    ) -> GeneratorOutput:
        """Map a latent batch to encoded rows.

        :param z: (B, z_dim) latent batch
        :param tau: Gumbel-Softmax temperature
        :param hard: Emit exact codes (straight-through) instead of expected codes
        :param gumbel: Precomputed noise per discrete field, each (B, K_c); drawn from `generator` when omitted
        """
        if z.ndim != 2 or z.shape[1] != self.z_dim:
            raise ValueError(f"Expected latent batch of shape (B, {self.z_dim}), got {tuple(z.shape)}")
        tokens = self.project(z).view(z.shape[0], self.n_features, self.d_model)
        if self.use_attention:
            tokens = self.attention(tokens)
        hidden = self.body(tokens.flatten(1))

        columns: list[torch.Tensor | None] = [None] * self.n_features
        soft, indices = [], []
        for j, (i, head) in enumerate(zip(self.discrete_columns, self.logit_heads, strict=True)):
            logits = head(hidden)
            noise = gumbel[j] if gumbel is not None else sample_gumbel(tuple(logits.shape), generator, logits.dtype)
            y_soft = gumbel_softmax(logits, noise, tau)
            y_hard, index = straight_through(y_soft)
            columns[i] = codebook_project(y_hard if hard else y_soft, self.codes(j).to(logits.dtype))
            soft.append(y_soft)
            indices.append(index)
        if self.continuous_head is not None:
            continuous = torch.tanh(self.continuous_head(hidden))
            for j, i in enumerate(self.continuous_columns):
                columns[i] = continuous[:, j]
        return GeneratorOutput(torch.stack(columns, dim=1), soft, indices)  # type: ignore[arg-type]


class Critic(nn.Module):
    """MLP scoring an F-vector with one unbounded real value."""

    def __init__(self, n_features: int, config: TrainingConfig):
        super().__init__()
        self.body = _mlp([n_features, *config.critic_hidden], config.leaky_slope)
        self.score = nn.Linear(config.critic_hidden[-1] if config.critic_hidden else n_features, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.score(self.body(x)).squeeze(-1)


def default_bottleneck(n_features: int) -> int:
    return min(max(8, n_features // 4), max(1, n_features - 1))


class Autoencoder(nn.Module):
    def __init__(self, n_features: int, config: TrainingConfig):
        super().__init__()
        bottleneck = config.ae_bottleneck if config.ae_bottleneck is not None else default_bottleneck(n_features)
        if n_features > 1 and bottleneck >= n_features:
            raise ValueError(f"Autoencoder bottleneck {bottleneck} must be smaller than the feature count {n_features}")
        self.encoder = nn.Sequential(
            nn.Linear(n_features, config.ae_hidden), nn.LeakyReLU(config.leaky_slope), nn.Linear(config.ae_hidden, bottleneck)
        )
        self.decoder = nn.Sequential(
            nn.Linear(bottleneck, config.ae_hidden), nn.LeakyReLU(config.leaky_slope), nn.Linear(config.ae_hidden, n_features), nn.Tanh()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x))


class LossGate(nn.Module):
    """Two-layer network mapping [L_g^AE, L_d] to raw mixing weights (u, v)."""

    def __init__(self, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(2, hidden), nn.ReLU(), nn.Linear(hidden, 2))

    def forward(self, losses: torch.Tensor) -> torch.Tensor:
        return self.net(losses)


def clip_softmax(raw: torch.Tensor, low: float, high: float) -> torch.Tensor:
    """Elementwise clamp of softmax(raw), without renormalization."""
    return torch.softmax(raw, dim=-1).clamp(low, high)


def gate_forward(ae_loss: torch.Tensor, adv_loss: torch.Tensor, gate: LossGate, low: float, high: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Mixing weights (alpha, beta) from the two generator losses.

    The losses enter as detached scalars; the gate learns only through its effect on the final objective.
    """
    if low > high:
        raise ValueError(f"Gate clip bounds must satisfy low <= high, got [{low}, {high}]")
    inputs = torch.stack([ae_loss.detach(), adv_loss.detach()]).to(next(gate.parameters()).dtype)
    weights = clip_softmax(gate(inputs), low, high)
    return weights[0], weights[1]


class GanModels(nn.Module):
    """Generator, critic, autoencoder and gate of one per-class training run."""

    def __init__(self, field_codes: FieldCodes, config: TrainingConfig):
        super().__init__()
        n_features = len(field_codes)
        self.generator = Generator(field_codes, config)
        self.critic = Critic(n_features, config)
        self.autoencoder = Autoencoder(n_features, config)
        self.gate = LossGate(config.gate_hidden)


@torch.no_grad()
def init_uniform_(module: nn.Module, generator: torch.Generator) -> None:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    for name, param in module.named_parameters():
        if name.endswith("bias"):
            param.zero_()
            continue
        # nn.Linear stores (out, in); attention projections are (in, out)
        fan_in = param.shape[0] if name.split(".")[-1] in ("w_q", "w_k", "w_v") else param.shape[-1]
        bound = 1.0 / math.sqrt(fan_in)
        param.copy_((torch.rand(param.shape, generator=generator, dtype=param.dtype) * 2.0 - 1.0) * bound)


def init_params(seed: int, config: TrainingConfig, field_codes: FieldCodes) -> GanModels:
    """Build and initialize all four networks deterministically from `seed`."""
    dtype = torch.float64 if config.dtype == "float64" else torch.float32
    models = GanModels(field_codes, config).to(dtype)
    init_uniform_(models, SeedStreams(seed).torch("init"))
    logger.debug(f"Initialized networks for F={len(field_codes)} with seed {seed}")
    return models
