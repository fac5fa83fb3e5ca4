import math

import pandas as pd
import pytest
import torch

from src.exceptions import CheckpointError, EmptyDatasetError, NumericAbortError
from src.services.gan.checkpoint import load_checkpoint
from src.services.gan.factory import field_codes_for, make_gan_trainer
from src.services.gan.networks import init_params
from src.services.gan.rng import SeedStreams
from src.services.gan.trainer import CHECKPOINT_NAME, LOSS_LOG_NAME, GanTrainer


def _snapshot(module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {name: p.detach().clone() for name, p in module.named_parameters()}


def _unchanged(module: torch.nn.Module, snapshot: dict[str, torch.Tensor]) -> bool:
    return all(torch.equal(p, snapshot[name]) for name, p in module.named_parameters())


def test_update_counters(small_config, toy_field_codes, toy_encoded):
    """Test 18 rows with B=4 give 4 iterations per epoch and the matching update counts."""
    trainer = GanTrainer(small_config, toy_field_codes, seed=0, class_name="toy")

    result = trainer.train(toy_encoded)

    assert result.counters.critic_updates == 60
    assert result.counters.generator_updates == 12
    assert result.counters.ae_updates == 12
    assert result.counters.epochs_completed == 3
    assert [r.epoch for r in result.records] == [0, 1, 2]
    assert all(r.is_finite() for r in result.records)
    assert all(r.swd is not None and r.swd >= 0.0 for r in result.records)


def test_small_class_runs_one_iteration(small_config, toy_field_codes, toy_encoded):
    """Test a class smaller than the batch still gets one iteration per epoch."""
    trainer = GanTrainer(small_config.model_copy(update={"epochs": 1}), toy_field_codes, seed=0)

    result = trainer.train(toy_encoded.rows_of("Probe").subset(slice(0, 2)))

    assert result.counters.generator_updates == 1
    assert result.counters.critic_updates == small_config.critic_steps


def test_critic_step_leaves_generator_untouched(small_config, toy_field_codes, toy_encoded):
    """Test a critic update only moves critic parameters."""
    trainer = GanTrainer(small_config, toy_field_codes, seed=1)
    trainer.set_data(toy_encoded)
    generator, autoencoder, critic = (_snapshot(m) for m in (trainer.models.generator, trainer.models.autoencoder, trainer.models.critic))

    trainer.critic_step(trainer.sample_real(4))

    assert _unchanged(trainer.models.generator, generator)
    assert _unchanged(trainer.models.autoencoder, autoencoder)
    assert not _unchanged(trainer.models.critic, critic)


def test_generator_step_freezes_critic_and_autoencoder(small_config, toy_field_codes, toy_encoded):
    """Test the generator update leaves critic and autoencoder unchanged and restores their gradients."""
    trainer = GanTrainer(small_config, toy_field_codes, seed=1)
    trainer.set_data(toy_encoded)
    critic, autoencoder = _snapshot(trainer.models.critic), _snapshot(trainer.models.autoencoder)
    generator, gate = _snapshot(trainer.models.generator), _snapshot(trainer.models.gate)

    stats = trainer.generator_step(4)

    assert _unchanged(trainer.models.critic, critic)
    assert _unchanged(trainer.models.autoencoder, autoencoder)
    assert not _unchanged(trainer.models.generator, generator)
    assert not _unchanged(trainer.models.gate, gate)
    assert all(p.requires_grad for p in trainer.models.critic.parameters())
    assert all(p.requires_grad for p in trainer.models.autoencoder.parameters())
    assert stats.alpha + stats.beta == pytest.approx(1.0)


def test_autoencoder_step_only_moves_autoencoder(small_config, toy_field_codes, toy_encoded):
    """Test the reconstruction update touches only the autoencoder."""
    trainer = GanTrainer(small_config, toy_field_codes, seed=1)
    trainer.set_data(toy_encoded)
    generator, critic = _snapshot(trainer.models.generator), _snapshot(trainer.models.critic)

    trainer.ae_real_step(trainer.sample_real(4))

    assert _unchanged(trainer.models.generator, generator)
    assert _unchanged(trainer.models.critic, critic)


def test_training_is_deterministic(small_config, toy_field_codes, toy_encoded):
    """Test identical seeds reproduce records and parameters exactly."""
    first = GanTrainer(small_config, toy_field_codes, seed=3)
    second = GanTrainer(small_config, toy_field_codes, seed=3)

    records_a = first.train(toy_encoded).records
    records_b = second.train(toy_encoded).records

    assert [r.model_dump() for r in records_a] == [r.model_dump() for r in records_b]
    state_b = second.models.state_dict()
    assert all(torch.equal(t, state_b[name]) for name, t in first.models.state_dict().items())


def test_resume_matches_uninterrupted_run(tmp_path, small_config, toy_field_codes, toy_encoded):
    """Test stopping after two epochs and resuming reproduces the third epoch bit for bit."""
    uninterrupted = GanTrainer(small_config, toy_field_codes, seed=5, class_name="toy").train(toy_encoded)

    partial = GanTrainer(small_config.model_copy(update={"epochs": 2}), toy_field_codes, seed=5, class_name="toy")
    partial.train(toy_encoded, out_dir=tmp_path)
    resumed = GanTrainer.resume(tmp_path / CHECKPOINT_NAME, epochs=3)
    result = resumed.train(toy_encoded, out_dir=tmp_path)

    assert len(result.records) == 1
    assert result.records[0].model_dump() == uninterrupted.records[2].model_dump()
    assert result.counters == uninterrupted.counters
    log = pd.read_csv(tmp_path / LOSS_LOG_NAME)
    assert log["epoch"].tolist() == [0, 1, 2]


def test_generator_only_variant(small_config, toy_field_codes, toy_encoded):
    """Test the plain adversarial variant skips the autoencoder and records alpha=0, beta=1."""
    config = small_config.with_variant("g-wgan-gp")
    trainer = GanTrainer(config, toy_field_codes, seed=0)

    result = trainer.train(toy_encoded)

    assert result.counters.ae_updates == 0
    assert all(r.alpha == 0.0 and r.beta == 1.0 for r in result.records)
    assert all(r.generator_loss == r.adversarial_loss for r in result.records)


def test_fixed_weight_variant(small_config, toy_field_codes, toy_encoded):
    """Test the gate-free variant mixes the two losses evenly and logs the entropy of the even split."""
    trainer = GanTrainer(small_config.with_variant("ga-wgan-gp"), toy_field_codes, seed=0)

    result = trainer.train(toy_encoded)

    assert all(r.alpha == 0.5 and r.beta == 0.5 and r.gate_entropy == pytest.approx(math.log(2)) for r in result.records)
    assert result.counters.ae_updates == 12


def test_temperature_schedule(small_config, toy_field_codes):
    """Test tau anneals linearly over the first 80% of epochs, then holds."""
    trainer = GanTrainer(small_config.model_copy(update={"epochs": 10}), toy_field_codes, seed=0)

    assert trainer.temperature(0) == 1.0
    assert trainer.temperature(4) == pytest.approx(0.55)
    assert trainer.temperature(8) == pytest.approx(0.1)
    assert trainer.temperature(9) == pytest.approx(0.1)


def test_non_finite_loss_aborts_and_keeps_last_checkpoint(tmp_path, small_config, toy_field_codes, toy_encoded):
    """Test a poisoned critic aborts the run with the failing epoch recorded."""
    trainer = GanTrainer(small_config.model_copy(update={"epochs": 1}), toy_field_codes, seed=0)
    trainer.train(toy_encoded, out_dir=tmp_path)
    trainer.config = small_config.model_copy(update={"epochs": 2})
    with torch.no_grad():
        trainer.models.critic.score.weight.fill_(float("nan"))

    with pytest.raises(NumericAbortError) as excinfo:
        trainer.train(toy_encoded, out_dir=tmp_path)

    assert excinfo.value.record.epoch == 1
    assert math.isnan(excinfo.value.record.critic_loss)
    assert load_checkpoint(tmp_path / CHECKPOINT_NAME).meta.epoch == 1


def test_gate_weights_stay_inside_clip_bounds(small_config, toy_field_codes, toy_encoded):
    """Test every recorded alpha and beta lies inside a narrowed clip interval."""
    config = small_config.model_copy(update={"gate_clip_low": 0.3, "gate_clip_high": 0.6})
    trainer = GanTrainer(config, toy_field_codes, seed=0)

    result = trainer.train(toy_encoded)

    low, high = 0.3 - 1e-6, 0.6 + 1e-6
    assert all(low <= r.alpha <= high and low <= r.beta <= high for r in result.records)


def test_aborted_record_keeps_failing_values(small_config, toy_field_codes, toy_encoded):
    """Test the abort record carries the non-finite critic loss and the finite gradient norm that came with it."""
    trainer = GanTrainer(small_config, toy_field_codes, seed=0)
    with torch.no_grad():
        trainer.models.critic.score.bias.fill_(float("nan"))

    with pytest.raises(NumericAbortError) as excinfo:
        trainer.train(toy_encoded)

    record = excinfo.value.record
    assert record.epoch == 0
    assert math.isnan(record.critic_loss)
    assert math.isfinite(record.grad_norm)
    assert math.isnan(record.generator_loss)


def test_empty_class_is_rejected(small_config, toy_field_codes, toy_encoded):
    """Test training on zero rows fails fast."""
    trainer = GanTrainer(small_config, toy_field_codes, seed=0, class_name="Worms")
    with pytest.raises(EmptyDatasetError):
        trainer.train(toy_encoded.subset(toy_encoded.labels < 0))


def test_checkpoint_errors(tmp_path, small_config, toy_field_codes, toy_encoded):
    """Test missing, corrupt and over-long checkpoints are rejected."""
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.gmac")

    corrupt = tmp_path / "corrupt.gmac"
    corrupt.write_bytes(b"GMAC\x00garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(corrupt)

    GanTrainer(small_config, toy_field_codes, seed=0).train(toy_encoded, out_dir=tmp_path)
    with pytest.raises(CheckpointError):
        GanTrainer.resume(tmp_path / CHECKPOINT_NAME, epochs=2)


def test_factory_uses_codec_layout(toy_codec, small_config):
    """Test the factory derives field codes from the codec and seeds from settings."""
    trainer = make_gan_trainer(toy_codec, "DoS", config=small_config, seed=11)

    assert field_codes_for(toy_codec) == [[-1.0, 1.0], None, None]
    assert trainer.seed == 11
    assert trainer.feature_names == ["proto", "bytes", "duration"]
    assert trainer.class_name == "DoS"


def _reference_wgan_gp_epoch(config, field_codes, seed, real_rows):
    """Plain WGAN-GP written out step by step on the same networks and random streams."""
    models = init_params(seed, config, field_codes)
    streams = SeedStreams(seed)
    critic_opt = torch.optim.Adam(models.critic.parameters(), lr=config.lr_critic, betas=(0.0, 0.9))
    generator_opt = torch.optim.Adam(models.generator.parameters(), lr=config.lr_generator, betas=(0.0, 0.9))
    real_all = torch.as_tensor(real_rows, dtype=torch.float64)
    batch = config.batch_size

    def fake_batch():
        z = torch.randn(batch, config.z_dim, generator=streams.torch("latent"), dtype=torch.float64)
        return models.generator(z, 1.0, generator=streams.torch("gumbel")).samples

    for _ in range(max(1, len(real_all) // batch)):
        for _ in range(config.critic_steps):
            real = real_all[torch.randint(0, len(real_all), (batch,), generator=streams.torch("shuffle"))]
            with torch.no_grad():
                fake = fake_batch()
            eps = torch.rand(batch, generator=streams.torch("epsilon"), dtype=torch.float64).unsqueeze(-1)
            x_hat = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
            scores = models.critic(x_hat)
            (grads,) = torch.autograd.grad(scores, x_hat, torch.ones_like(scores), create_graph=True)
            penalty = config.gp_weight * ((torch.linalg.vector_norm(grads, ord=2, dim=-1) - 1.0) ** 2).mean()
            real_scores, fake_scores = models.critic(real), models.critic(fake)
            loss = fake_scores.mean() - real_scores.mean() + penalty
            critic_opt.zero_grad(set_to_none=True)
            loss.backward()
            critic_opt.step()
        loss = -models.critic(fake_batch()).mean()
        generator_opt.zero_grad(set_to_none=True)
        loss.backward()
        generator_opt.step()
    return models


def test_plain_variant_matches_reference_wgan_gp(small_config, toy_field_codes, toy_encoded):
    """Test all three extensions off reproduces a hand-written WGAN-GP epoch bit for bit."""
    config = small_config.with_variant("g-wgan-gp").model_copy(update={"epochs": 1})
    trainer = GanTrainer(config, toy_field_codes, seed=8)

    trainer.train(toy_encoded)
    reference = _reference_wgan_gp_epoch(config, toy_field_codes, 8, toy_encoded.features)

    for name in ("generator", "critic"):
        expected = getattr(reference, name).state_dict()
        assert all(torch.equal(t, expected[key]) for key, t in getattr(trainer.models, name).state_dict().items()), name
