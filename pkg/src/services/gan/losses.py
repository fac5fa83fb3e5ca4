import logging

import torch
from torch import nn

from src.exceptions import NumericAbortError

logger = logging.getLogger(__name__)


def interpolate(x: torch.Tensor, x_fake: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """x_hat_i = eps_i * x_i + (1 - eps_i) * x_fake_i."""
    if x.shape != x_fake.shape:
        raise ValueError(f"Real batch {tuple(x.shape)} and fake batch {tuple(x_fake.shape)} differ in shape")
    if eps.shape != (x.shape[0],):
        raise ValueError(f"Expected one interpolation weight per row ({x.shape[0]}), got {tuple(eps.shape)}")
    eps = eps.unsqueeze(-1)
    return eps * x + (1.0 - eps) * x_fake


def gradient_penalty(critic: nn.Module, x_hat: torch.Tensor, weight: float) -> tuple[torch.Tensor, torch.Tensor]:
    """weight * mean((||grad_x C(x_hat)||_2 - 1)^2), differentiable w.r.t. the critic parameters.

    :returns: (penalty, mean gradient norm)
    """
    x_hat = x_hat.detach().requires_grad_(True)
    scores = critic(x_hat)
    (gradients,) = torch.autograd.grad(outputs=scores, inputs=x_hat, grad_outputs=torch.ones_like(scores), create_graph=True)
    norm = torch.linalg.vector_norm(gradients.reshape(x_hat.shape[0], -1), ord=2, dim=-1)
    if not torch.isfinite(gradients).all():
        logger.error("Non-finite critic input gradient in gradient penalty")
        raise NumericAbortError("Non-finite critic input gradient in gradient penalty", record={"grad_norm": norm.detach().mean().item()})
    return weight * ((norm - 1.0) ** 2).mean(), norm.detach().mean()


def critic_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor, penalty: torch.Tensor) -> torch.Tensor:
    return fake_scores.mean() - real_scores.mean() + penalty


def adversarial_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    return -fake_scores.mean()


def reconstruction_loss(x: torch.Tensor, x_rec: torch.Tensor) -> torch.Tensor:
    """Batch mean of the per-row squared L2 reconstruction error."""
    return ((x - x_rec) ** 2).sum(dim=-1).mean()


def binary_entropy(alpha: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """-alpha ln alpha - beta ln beta, with 0 ln 0 = 0."""
    return -(torch.special.xlogy(alpha, alpha) + torch.special.xlogy(beta, beta))


def gated_objective(ae_loss: torch.Tensor, adv_loss: torch.Tensor, alpha: torch.Tensor, beta: torch.Tensor, entropy_weight: float) -> torch.Tensor:
    """alpha * L_g^AE + beta * L_d - gamma * H(alpha, beta)."""
    return alpha * ae_loss + beta * adv_loss - entropy_weight * binary_entropy(alpha, beta)


def ensure_finite(name: str, value: torch.Tensor, record: object | None = None) -> None:
    if not torch.isfinite(value).all():
        logger.error(f"Non-finite {name}: {value.item() if value.numel() == 1 else value}")
        raise NumericAbortError(f"Non-finite {name}", record=record)
