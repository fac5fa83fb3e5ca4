import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict
from torch import nn

from src.config import TrainingConfig
from src.exceptions import CheckpointError, EmptyDatasetError, NumericAbortError
from src.schemas.flows.models import EncodedDataset
from src.schemas.training.models import LOSS_LOG_COLUMNS, LossRecord, UpdateCounters

from .checkpoint import CheckpointMeta, load_checkpoint, restore_models, save_checkpoint
from .losses import (
    adversarial_loss,
    binary_entropy,
    critic_loss,
    ensure_finite,
    gated_objective,
    gradient_penalty,
    interpolate,
    reconstruction_loss,
)
from .networks import FieldCodes, GanModels, GeneratorOutput, gate_forward, init_params
from .rng import SeedStreams
from .swd import sliced_wasserstein

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "generator.gmac"
LOSS_LOG_NAME = "loss_log.csv"


@contextmanager
def frozen(*modules: nn.Module) -> Iterator[None]:
    """Disable gradients of the given modules for the duration of the block."""
    params = [p for m in modules for p in m.parameters()]
    previous = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, flag in zip(params, previous, strict=True):
            p.requires_grad_(flag)


class StepStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    critic_loss: float = 0.0
    grad_norm: float = 0.0
    adversarial_loss: float = 0.0
    ae_real_loss: float = 0.0
    ae_fake_loss: float = 0.0
    alpha: float = 0.0
    beta: float = 1.0
    gate_entropy: float = 0.0
    generator_loss: float = 0.0


class TrainingResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: list[LossRecord]
    counters: UpdateCounters
    checkpoint_path: Path | None = None


class GanTrainer:
    """Per-class adversarial training of one generator.

    Each iteration runs `critic_steps` critic updates on fresh real/fake/interpolation draws, one
    autoencoder update on real rows and one joint generator/gate update.
    """

    def __init__(self, config: TrainingConfig, field_codes: FieldCodes, seed: int, class_name: str = "", feature_names: list[str] | None = None):
        self.config = config
        self.field_codes = field_codes
        self.seed = seed
        self.class_name = class_name
        self.feature_names = feature_names or [f"f{i}" for i in range(len(field_codes))]
        self.dtype = torch.float64 if config.dtype == "float64" else torch.float32

        self.models: GanModels = init_params(seed, config, field_codes)
        self.streams = SeedStreams(seed)
        self.counters = UpdateCounters()
        self.tau = config.tau_start
        self.critic_optimizer = torch.optim.Adam(self.models.critic.parameters(), lr=config.lr_critic, betas=(0.0, 0.9))
        self.generator_optimizer = torch.optim.Adam(
            [*self.models.generator.parameters(), *self.models.gate.parameters()], lr=config.lr_generator, betas=(0.0, 0.9)
        )
        self.ae_optimizer = torch.optim.Adam(self.models.autoencoder.parameters(), lr=config.lr_autoencoder, betas=(0.9, 0.999))
        self._real: torch.Tensor | None = None

    @property
    def optimizers(self) -> dict[str, torch.optim.Optimizer]:
        return {"autoencoder": self.ae_optimizer, "critic": self.critic_optimizer, "generator": self.generator_optimizer}

    def temperature(self, epoch: int) -> float:
        """Linear anneal from tau_start to tau_end over the first tau_anneal_fraction of the epochs, then hold."""
        cfg = self.config
        anneal_epochs = max(1, round(cfg.tau_anneal_fraction * cfg.epochs))
        progress = min(epoch / anneal_epochs, 1.0)
        return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * progress

    def set_data(self, dataset: EncodedDataset) -> None:
        if dataset.n_rows == 0:
            raise EmptyDatasetError(f"No training rows for class '{self.class_name}'")
        if dataset.n_features != len(self.field_codes):
            raise ValueError(f"Dataset has {dataset.n_features} features, generator expects {len(self.field_codes)}")
        self._real = torch.as_tensor(dataset.features, dtype=self.dtype)

    def sample_real(self, batch_size: int) -> torch.Tensor:
        assert self._real is not None, "call set_data first"
        index = torch.randint(0, self._real.shape[0], (batch_size,), generator=self.streams.torch("shuffle"))
        return self._real[index]

    def sample_latent(self, batch_size: int, stream: str = "latent") -> torch.Tensor:
        return torch.randn(batch_size, self.config.z_dim, generator=self.streams.torch(stream), dtype=self.dtype)

    def generate(self, batch_size: int, hard: bool = True, stream: str = "latent") -> GeneratorOutput:
        z = self.sample_latent(batch_size, stream)
        gumbel_stream = "gumbel" if stream == "latent" else stream
        return self.models.generator(z, self.tau, hard=hard, generator=self.streams.torch(gumbel_stream))

    def critic_step(self, real: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """One critic update with the generator frozen.

        :returns: (L_C, mean gradient norm on the interpolates)
        """
        with torch.no_grad():
            fake = self.generate(real.shape[0]).samples
        eps = torch.rand(real.shape[0], generator=self.streams.torch("epsilon"), dtype=self.dtype)
        x_hat = interpolate(real, fake, eps)
        penalty, grad_norm = gradient_penalty(self.models.critic, x_hat, self.config.gp_weight)
        loss = critic_loss(self.models.critic(real), self.models.critic(fake), penalty)
        ensure_finite("critic loss", loss, record={"critic_loss": loss.item(), "grad_norm": grad_norm.item()})
        self.critic_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.critic_optimizer.step()
        self.counters.critic_updates += 1
        return loss.detach(), grad_norm

    def ae_real_step(self, real: torch.Tensor) -> torch.Tensor:
        loss = reconstruction_loss(real, self.models.autoencoder(real))
        ensure_finite("autoencoder reconstruction loss", loss, record={"ae_real_loss": loss.item()})
        self.ae_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.ae_optimizer.step()
        self.counters.ae_updates += 1
        return loss.detach()

    def generator_objective(self, batch_size: int) -> tuple[torch.Tensor, StepStats]:
        """Final generator loss on a fresh fake batch, with critic and autoencoder treated as constants."""
        cfg = self.config
        fake = self.generate(batch_size).samples
        adv = adversarial_loss(self.models.critic(fake))
        if not cfg.use_ae_constraint:
            return adv, StepStats(adversarial_loss=adv.item(), generator_loss=adv.item())

        ae_fake = reconstruction_loss(fake, self.models.autoencoder(fake))
        if cfg.use_gate:
            alpha, beta = gate_forward(ae_fake, adv, self.models.gate, cfg.gate_clip_low, cfg.gate_clip_high)
            loss = gated_objective(ae_fake, adv, alpha, beta, cfg.entropy_weight)
        else:
            alpha = beta = torch.tensor(0.5, dtype=self.dtype)
            loss = alpha * ae_fake + beta * adv
        stats = StepStats(
            adversarial_loss=adv.item(),
            ae_fake_loss=ae_fake.item(),
            alpha=alpha.item(),
            beta=beta.item(),
            gate_entropy=binary_entropy(alpha, beta).item(),
            generator_loss=loss.item(),
        )
        return loss, stats

    def generator_step(self, batch_size: int) -> StepStats:
        """Joint update of generator and gate with critic and autoencoder frozen."""
        with frozen(self.models.critic, self.models.autoencoder):
            loss, stats = self.generator_objective(batch_size)
            ensure_finite("generator loss", loss, record=stats.model_dump(exclude={"critic_loss", "grad_norm", "ae_real_loss"}))
            self.generator_optimizer.zero_grad(set_to_none=True)
            loss.backward()
            self.generator_optimizer.step()
        self.counters.generator_updates += 1
        return stats

    def iteration(self) -> StepStats:
        cfg = self.config
        critic_losses, grad_norms = [], []
        for _ in range(cfg.critic_steps):
            loss, grad_norm = self.critic_step(self.sample_real(cfg.batch_size))
            critic_losses.append(loss.item())
            grad_norms.append(grad_norm.item())
        ae_real = self.ae_real_step(self.sample_real(cfg.batch_size)).item() if cfg.use_ae_constraint else 0.0
        stats = self.generator_step(cfg.batch_size)
        return stats.model_copy(update={"critic_loss": float(np.mean(critic_losses)), "grad_norm": float(np.mean(grad_norms)), "ae_real_loss": ae_real})

    def monitor_swd(self) -> float:
        """SWD between real rows and hard-mode samples, drawn from the monitoring streams only."""
        assert self._real is not None
        n = min(self.config.swd_samples, self._real.shape[0])
        rng = self.streams.numpy("monitor")
        real = self._real.numpy()[rng.choice(self._real.shape[0], size=n, replace=False)]
        with torch.no_grad():
            fake = self.generate(n, stream="monitor").samples.numpy()
        return sliced_wasserstein(real, fake, self.config.swd_projections, int(rng.integers(0, 2**31 - 1)))

    def train(self, dataset: EncodedDataset, out_dir: Path | None = None) -> TrainingResult:
        """Train from the current state up to `config.epochs` completed epochs.

        Emits one LossRecord per epoch, writes a checkpoint every `checkpoint_every` epochs and at the
        end, and appends to the loss log. A non-finite loss aborts the run, leaving the last good
        checkpoint in place.
        """
        cfg = self.config
        self.set_data(dataset)
        iterations = max(1, dataset.n_rows // cfg.batch_size)
        records: list[LossRecord] = []
        checkpoint_path = out_dir / CHECKPOINT_NAME if out_dir else None
        start = self.counters.epochs_completed
        logger.info(f"Training '{self.class_name}' on {dataset.n_rows} rows: epochs {start}->{cfg.epochs}, {iterations} iterations/epoch")

        for epoch in range(start, cfg.epochs):
            self.tau = self.temperature(epoch)
            try:
                steps = [self.iteration() for _ in range(iterations)]
            except NumericAbortError as e:
                partial = _aborted_record(epoch, self.tau, e.record if isinstance(e.record, dict) else {})
                logger.error(f"Aborting '{self.class_name}' at epoch {epoch}: {e}")
                if out_dir:
                    self._write_loss_log(out_dir, records + [partial], start)
                raise NumericAbortError(str(e), record=partial) from e

            record = LossRecord(
                epoch=epoch,
                tau=self.tau,
                swd=self.monitor_swd() if (epoch + 1) % cfg.swd_every == 0 else None,
                **{k: float(np.mean([getattr(s, k) for s in steps])) for k in StepStats.model_fields},
            )
            records.append(record)
            self.counters.epochs_completed = epoch + 1
            if (epoch + 1) % cfg.log_every == 0 or epoch + 1 == cfg.epochs:
                logger.info(
                    f"[{self.class_name}] epoch {epoch + 1}/{cfg.epochs} L_C={record.critic_loss:.4f} L_d={record.adversarial_loss:.4f} "
                    f"alpha={record.alpha:.3f} tau={record.tau:.3f} swd={record.swd}"
                )
            if checkpoint_path and ((epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs):
                self.save(checkpoint_path)

        if out_dir:
            self._write_loss_log(out_dir, records, start)
        return TrainingResult(records=records, counters=self.counters.model_copy(), checkpoint_path=checkpoint_path)

    def save(self, path: Path) -> None:
        meta = CheckpointMeta(
            config=self.config,
            seed=self.seed,
            class_name=self.class_name,
            feature_names=self.feature_names,
            field_codes=self.field_codes,
            tau=self.tau,
            epoch=self.counters.epochs_completed,
            counters=self.counters.model_dump(),
        )
        save_checkpoint(path, meta, self.models, self.optimizers, self.streams.torch_states(), self.streams.numpy_states())

    @classmethod
    def resume(cls, path: Path, epochs: int | None = None) -> "GanTrainer":
        """Rebuild a trainer from a checkpoint; training continues where it stopped."""
        checkpoint = load_checkpoint(path)
        meta = checkpoint.meta
        config = meta.config if epochs is None else meta.config.model_copy(update={"epochs": epochs})
        if config.epochs < meta.epoch:
            raise CheckpointError(f"Checkpoint has {meta.epoch} epochs, more than the requested {config.epochs}")
        trainer = cls(config, meta.field_codes, meta.seed, meta.class_name, meta.feature_names)
        trainer.models = restore_models(checkpoint)
        trainer.critic_optimizer = torch.optim.Adam(trainer.models.critic.parameters(), lr=config.lr_critic, betas=(0.0, 0.9))
        trainer.generator_optimizer = torch.optim.Adam(
            [*trainer.models.generator.parameters(), *trainer.models.gate.parameters()], lr=config.lr_generator, betas=(0.0, 0.9)
        )
        trainer.ae_optimizer = torch.optim.Adam(trainer.models.autoencoder.parameters(), lr=config.lr_autoencoder, betas=(0.9, 0.999))
        for name, optimizer in trainer.optimizers.items():
            optimizer.load_state_dict(checkpoint.optimizer_states[name])
        trainer.streams.restore(checkpoint.rng_torch, checkpoint.rng_numpy)
        trainer.counters = UpdateCounters.model_validate(meta.counters)
        trainer.tau = meta.tau
        logger.info(f"Resumed '{meta.class_name}' from {path} at epoch {meta.epoch}")
        return trainer

    @staticmethod
    def _write_loss_log(out_dir: Path, records: list[LossRecord], start: int) -> None:
        frame = pd.DataFrame([r.model_dump() for r in records], columns=LOSS_LOG_COLUMNS)
        existing = out_dir / LOSS_LOG_NAME
        if start > 0 and existing.exists():
            earlier = pd.read_csv(existing)
            frame = pd.concat([earlier[earlier["epoch"] < start], frame], ignore_index=True)
        frame.to_csv(out_dir / LOSS_LOG_NAME, index=False)


def _aborted_record(epoch: int, tau: float, failing: dict[str, float]) -> LossRecord:
    """Partial record of an aborted epoch: the values that failed, NaN for everything not reached."""
    values = dict.fromkeys(StepStats.model_fields, float("nan")) | failing
    return LossRecord(epoch=epoch, tau=tau, **values)
