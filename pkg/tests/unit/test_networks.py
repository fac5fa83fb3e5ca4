import math

import pytest
import torch
from torch import nn

from src.services.gan.networks import (
    Autoencoder,
    Critic,
    Generator,
    LossGate,
    clip_softmax,
    codebook_project,
    gate_forward,
    gumbel_softmax,
    init_params,
    sample_gumbel,
    self_attention,
    straight_through,
)
from src.services.gan.rng import SeedStreams, substream_seed


def test_zero_query_key_gives_uniform_attention():
    """Test W_Q = W_K = 0 averages the values across features."""
    h = torch.randn(5, 8, dtype=torch.float64)
    w_v = torch.randn(8, 8, dtype=torch.float64)
    zeros = torch.zeros(8, 4, dtype=torch.float64)

    out, weights = self_attention(h, zeros, zeros, w_v)

    torch.testing.assert_close(weights, torch.full((5, 5), 0.2, dtype=torch.float64))
    torch.testing.assert_close(out, (h @ w_v).mean(dim=0, keepdim=True).expand(5, 8))


def test_single_feature_attention_is_identity_on_values():
    """Test one token attends only to itself."""
    h = torch.randn(1, 6, dtype=torch.float64)
    w_q, w_k, w_v = (torch.randn(6, 6, dtype=torch.float64) for _ in range(3))

    out, weights = self_attention(h, w_q, w_k, w_v)

    assert weights.item() == 1.0
    torch.testing.assert_close(out, h @ w_v)


def test_attention_rows_match_softmax_oracle():
    """Test attention rows sum to one and match a direct computation."""
    gen = torch.Generator().manual_seed(0)
    h = torch.randn(3, 4, 8, generator=gen, dtype=torch.float64)
    w_q, w_k, w_v = (torch.randn(8, 8, generator=gen, dtype=torch.float64) for _ in range(3))

    _, weights = self_attention(h, w_q, w_k, w_v)

    logits = (h @ w_q) @ (h @ w_k).transpose(-2, -1) / math.sqrt(8)
    expected = logits.exp() / logits.exp().sum(dim=-1, keepdim=True)
    torch.testing.assert_close(weights, expected)
    torch.testing.assert_close(weights.sum(dim=-1), torch.ones(3, 4, dtype=torch.float64), atol=1e-6, rtol=0)


def test_gumbel_softmax_arithmetic():
    """Test the relaxation at zero noise."""
    zero = torch.zeros(2, dtype=torch.float64)
    torch.testing.assert_close(gumbel_softmax(zero, zero, 0.3), torch.tensor([0.5, 0.5], dtype=torch.float64))
    result = gumbel_softmax(torch.tensor([math.log(2.0), 0.0], dtype=torch.float64), zero, 1.0)
    torch.testing.assert_close(result, torch.tensor([2 / 3, 1 / 3], dtype=torch.float64))
    with pytest.raises(ValueError):
        gumbel_softmax(zero, zero, 0.0)


def test_gumbel_max_samples_the_categorical():
    """Test argmax(logits + Gumbel noise) frequencies match softmax(logits)."""
    gen = torch.Generator().manual_seed(11)
    n = 100_000
    for _ in range(10):
        logits = torch.randn(4, generator=gen, dtype=torch.float64)
        draws = (logits + sample_gumbel((n, 4), gen, torch.float64)).argmax(dim=-1)
        frequencies = torch.bincount(draws, minlength=4).double() / n
        assert (frequencies - torch.softmax(logits, dim=-1)).abs().max() < 0.01

    logits = torch.log(torch.tensor([0.5, 0.3, 0.2], dtype=torch.float64))
    draws = (logits + sample_gumbel((n, 3), gen, torch.float64)).argmax(dim=-1)
    frequencies = torch.bincount(draws, minlength=3).double() / n
    assert (frequencies - torch.tensor([0.5, 0.3, 0.2], dtype=torch.float64)).abs().max() < 0.01


def test_straight_through_forward_and_ties():
    """Test the forward pass is the one-hot argmax with ties to the lowest index."""
    y_hard, index = straight_through(torch.tensor([[0.1, 0.7, 0.2], [0.5, 0.5, 0.0]]))

    assert y_hard.tolist() == [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]
    assert index.tolist() == [1, 0]


def test_straight_through_gradient_is_soft_gradient():
    """Test d<y_hard, v>/dlogits equals d<y_soft, v>/dlogits."""
    codes = torch.tensor([-1.0, 0.0, 1.0], dtype=torch.float64)
    logits = torch.tensor([0.3, -0.2, 0.9], dtype=torch.float64, requires_grad=True)
    gumbel = torch.tensor([0.1, 0.4, -0.3], dtype=torch.float64)

    y_soft = gumbel_softmax(logits, gumbel, 0.7)
    (hard_grad,) = torch.autograd.grad(codebook_project(straight_through(y_soft)[0], codes), logits)
    (soft_grad,) = torch.autograd.grad(codebook_project(gumbel_softmax(logits, gumbel, 0.7), codes), logits)

    torch.testing.assert_close(hard_grad, soft_grad, atol=1e-6, rtol=0)


def test_codebook_projection_selects_codes():
    """Test a one-hot selects exactly its code."""
    codes = torch.tensor([-1.0, 0.0, 1.0])
    assert codebook_project(torch.tensor([0.0, 0.0, 1.0]), codes).item() == 1.0
    assert codebook_project(torch.tensor([1.0, 0.0, 0.0]), codes).item() == -1.0


def test_generator_hard_outputs_are_legal(small_config, toy_field_codes):
    """Test hard-mode rows use exact codes and stay in range, and sampling is reproducible."""
    generator = init_params(3, small_config, toy_field_codes).generator
    z = torch.randn(1000, small_config.z_dim, generator=torch.Generator().manual_seed(1), dtype=torch.float64)

    first = generator(z, 0.5, generator=torch.Generator().manual_seed(2))
    second = generator(z, 0.5, generator=torch.Generator().manual_seed(2))

    samples = first.samples.detach()
    assert torch.isfinite(samples).all()
    assert samples.abs().max() <= 1.0
    assert set(samples[:, 0].tolist()) <= {-1.0, 1.0}
    assert torch.equal(samples, second.samples.detach())
    assert first.indices[0].shape == (1000,)


def test_generator_soft_mode_emits_expected_codes(small_config, toy_field_codes):
    """Test soft mode returns <y_soft, v> on discrete columns."""
    generator = init_params(3, small_config, toy_field_codes).generator
    z = torch.randn(8, small_config.z_dim, dtype=torch.float64)

    out = generator(z, 1.0, hard=False, generator=torch.Generator().manual_seed(0))

    expected = codebook_project(out.soft[0], torch.tensor([-1.0, 1.0], dtype=torch.float64))
    torch.testing.assert_close(out.samples[:, 0], expected)


def test_generator_without_attention(small_config, toy_field_codes):
    """Test the attention-free variant still builds and samples."""
    config = small_config.model_copy(update={"use_attention": False})
    generator = Generator(toy_field_codes, config).double()
    out = generator(torch.zeros(2, config.z_dim, dtype=torch.float64), 1.0, generator=torch.Generator().manual_seed(0))
    assert out.samples.shape == (2, 3)


def test_generator_rejects_bad_latent(small_config, toy_field_codes):
    """Test a latent of the wrong width is rejected."""
    generator = init_params(0, small_config, toy_field_codes).generator
    with pytest.raises(ValueError):
        generator(torch.zeros(2, small_config.z_dim + 1, dtype=torch.float64), 1.0)


def test_zero_weight_critic_scores_zero(small_config):
    """Test a critic with zero weights scores every row 0."""
    critic = Critic(3, small_config).double()
    for param in critic.parameters():
        nn.init.zeros_(param)
    assert critic(torch.randn(4, 3, dtype=torch.float64)).tolist() == [0.0] * 4


def test_critic_input_gradient_matches_finite_differences(small_config):
    """Test the critic's input gradient against central differences."""
    critic = init_params(5, small_config, [None, None, None]).critic
    x = torch.randn(6, 3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda inp: critic(inp), (x,), eps=1e-6, atol=1e-6, rtol=1e-4)


def test_autoencoder_range_and_bottleneck(small_config):
    """Test reconstructions lie in [-1, 1] and the bottleneck must be narrower than F."""
    autoencoder = Autoencoder(3, small_config).double()
    assert autoencoder(torch.randn(10, 3, dtype=torch.float64) * 5).abs().max() <= 1.0
    with pytest.raises(ValueError):
        Autoencoder(3, small_config.model_copy(update={"ae_bottleneck": 3}))


def test_autoencoder_overfits_point_mass(small_config):
    """Test training on a single repeated row reconstructs it."""
    torch.manual_seed(0)
    autoencoder = Autoencoder(3, small_config).double()
    x0 = torch.tensor([[0.3, -0.5, 0.7]], dtype=torch.float64).repeat(10, 1)
    optimizer = torch.optim.Adam(autoencoder.parameters(), lr=1e-2)
    for _ in range(1000):
        optimizer.zero_grad()
        loss = ((autoencoder(x0) - x0) ** 2).sum(dim=-1).mean()
        loss.backward()
        optimizer.step()
    assert (autoencoder(x0[:1]) - x0[:1]).abs().max() < 2e-2


def test_clip_softmax_cases():
    """Test the gate weight mapping and elementwise clipping."""
    torch.testing.assert_close(clip_softmax(torch.tensor([math.log(3.0), 0.0]), 0.0, 1.0), torch.tensor([0.75, 0.25]))
    torch.testing.assert_close(clip_softmax(torch.tensor([10.0, 0.0]), 0.1, 0.9), torch.tensor([0.9, 0.1]))


def test_zero_weight_gate_is_even(small_config):
    """Test a zero-weight gate yields (0.5, 0.5) and never backpropagates into its inputs."""
    gate = LossGate(small_config.gate_hidden)
    for param in gate.parameters():
        nn.init.zeros_(param)
    ae_loss = torch.tensor(2.0, requires_grad=True)
    adv_loss = torch.tensor(-1.0, requires_grad=True)

    alpha, beta = gate_forward(ae_loss, adv_loss, gate, 0.0, 1.0)

    assert (alpha.item(), beta.item()) == (0.5, 0.5)
    (alpha + beta).backward()
    assert ae_loss.grad is None
    assert adv_loss.grad is None
    with pytest.raises(ValueError):
        gate_forward(ae_loss, adv_loss, gate, 0.9, 0.1)


def test_init_params_is_seeded(small_config, toy_field_codes):
    """Test identical seeds give identical parameters and different seeds differ."""
    first = init_params(1, small_config, toy_field_codes).state_dict()
    again = init_params(1, small_config, toy_field_codes).state_dict()
    other = init_params(2, small_config, toy_field_codes).state_dict()

    assert all(torch.equal(first[name], again[name]) for name in first)
    assert not all(torch.equal(first[name], other[name]) for name in first)


def test_initial_generator_is_finite(small_config, toy_field_codes):
    """Test an initialized generator yields finite rows over many latent draws."""
    generator = init_params(9, small_config, toy_field_codes).generator
    streams = SeedStreams(9)
    z = torch.randn(1000, small_config.z_dim, generator=streams.torch("latent"), dtype=torch.float64)
    assert torch.isfinite(generator(z, 1.0, generator=streams.torch("gumbel")).samples).all()


def test_substreams_are_independent_and_stable():
    """Test named substreams differ from each other and are stable per seed."""
    assert substream_seed(0, "latent") == substream_seed(0, "latent")
    assert substream_seed(0, "latent") != substream_seed(0, "gumbel")
    assert substream_seed(0, "latent") != substream_seed(1, "latent")
