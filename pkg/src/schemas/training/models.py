import math

from pydantic import BaseModel, Field

# Column order of the loss log
LOSS_LOG_COLUMNS = [
    "epoch",
    "critic_loss",
    "adversarial_loss",
    "ae_real_loss",
    "ae_fake_loss",
    "alpha",
    "beta",
    "gate_entropy",
    "generator_loss",
    "grad_norm",
    "swd",
    "tau",
]


class LossRecord(BaseModel):
    """Per-epoch means of the training losses."""

    epoch: int = Field(..., ge=0)
    critic_loss: float = Field(..., description="L_C including the gradient penalty")
    adversarial_loss: float = Field(..., description="L_d = -mean C(G(z))")
    ae_real_loss: float = Field(0.0, description="L_r^AE on real rows")
    ae_fake_loss: float = Field(0.0, description="L_g^AE on generated rows with the autoencoder frozen")
    alpha: float = 0.0
    beta: float = 1.0
    gate_entropy: float = 0.0
    generator_loss: float = Field(..., description="Final generator objective")
    grad_norm: float = Field(..., description="Mean critic input-gradient norm on interpolates")
    swd: float | None = Field(None, description="Sliced Wasserstein distance to the real rows, when monitored")
    tau: float = Field(..., gt=0.0)

    def is_finite(self) -> bool:
        values = [v for k, v in self.model_dump().items() if isinstance(v, float)]
        return all(math.isfinite(v) for v in values)


class UpdateCounters(BaseModel):
    critic_updates: int = 0
    generator_updates: int = 0
    ae_updates: int = 0
    epochs_completed: int = 0
