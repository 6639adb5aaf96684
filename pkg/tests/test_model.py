import math

import numpy as np
import pytest
import torch

from mmvap.errors import ConfigError, EmptyMask, ShapeMismatch
from mmvap.model import (FUSIONS, CausalAttention, CrossAttnBlock, MMVap, ModelConfig,
                         SelfAttnBlock, VisualProjection, count_parameters, loss_from_probs,
                         vap_loss)
from mmvap.vap import SPEAKER_PERMUTATION

from probes import inputs, tiny


def naive_attention(att: CausalAttention, x, mem):
    """Dense masked attention written out directly."""
    b, t, d = x.shape
    h, dh = att.n_heads, att.d_head
    q = att.q(x).view(b, t, h, dh).transpose(1, 2)
    k = att.k(mem).view(b, t, h, dh).transpose(1, 2)
    v = att.v(mem).view(b, t, h, dh).transpose(1, 2)
    out = torch.zeros_like(q)
    for head in range(h):
        slope = 2.0 ** (-8.0 * (head + 1) / h)
        for i in range(t):
            lo = max(0, i - att.window + 1)
            js = torch.arange(lo, i + 1)
            logits = (q[:, head, i:i + 1] @ k[:, head, lo:i + 1].transpose(-1, -2)) / math.sqrt(dh)
            logits = logits - slope * (i - js).to(x.dtype)
            out[:, head, i] = (logits.softmax(-1) @ v[:, head, lo:i + 1])[:, 0]
    return att.out(out.transpose(1, 2).reshape(b, t, d))


@pytest.mark.parametrize("t", [30, 100, 250])
def test_windowed_attention_matches_dense_oracle(t):
    torch.manual_seed(0)
    att = CausalAttention(8, 2, window=100).double()
    x, m = torch.randn(1, t, 8, dtype=torch.float64), torch.randn(1, t, 8, dtype=torch.float64)
    torch.testing.assert_close(att(x, m), naive_attention(att, x, m), atol=1e-12, rtol=0)


@pytest.mark.parametrize("fusion", FUSIONS)
def test_output_is_distribution(fusion):
    cfg = tiny(fusion)
    p = MMVap(cfg).predict(**inputs(cfg))
    assert p.shape == (2, 25, 256)
    torch.testing.assert_close(p.sum(-1), torch.ones(2, 25), atol=1e-6, rtol=0)


def test_self_attn_block_shape_and_identity_residual():
    cfg = tiny()
    block = SelfAttnBlock(cfg)
    x = torch.randn(1, 12, 8)
    assert block(x).shape == x.shape
    for layer in block.layers:
        for lin in (layer.attn.out, layer.ff.fc2):
            torch.nn.init.zeros_(lin.weight)
            torch.nn.init.zeros_(lin.bias)
    assert torch.equal(block(x), x)


def test_cross_block_symmetric():
    block = CrossAttnBlock(tiny())
    x1, x2 = torch.randn(2, 20, 8), torch.randn(2, 20, 8)
    torch.testing.assert_close(block(x1, x2), block(x2, x1), atol=1e-6, rtol=0)
    with pytest.raises(ShapeMismatch):
        block(x1, x2[:, :10])


def test_visual_projection():
    assert VisualProjection(60, 256)(torch.zeros(1, 3, 60)).shape == (1, 3, 256)
    assert VisualProjection(17, 8)(torch.zeros(1, 3, 17)).shape == (1, 3, 8)
    with pytest.raises(ShapeMismatch):
        VisualProjection(17, 8)(torch.zeros(1, 3, 6))


def test_same_seed_same_weights_and_output():
    cfg = tiny()
    x = inputs(cfg)
    assert torch.equal(MMVap(cfg)(**x), MMVap(cfg)(**x))
    assert not torch.equal(MMVap(cfg)(**x), MMVap(tiny(seed=1))(**x))


@pytest.mark.parametrize("fusion", FUSIONS)
def test_speaker_swap_permutes_output(fusion):
    cfg = tiny(fusion)
    model = MMVap(cfg).double()
    x = inputs(cfg, dtype=torch.float64)
    swapped = {k.replace("_a", "_X").replace("_b", "_a").replace("_X", "_b"): v for k, v in x.items()}
    p, q = model.predict(**x), model.predict(**swapped)
    torch.testing.assert_close(q, p[..., torch.as_tensor(SPEAKER_PERMUTATION)], atol=1e-12, rtol=0)


@pytest.mark.parametrize("fusion", FUSIONS)
def test_causality_probes(fusion):
    """Perturb one input stream after frame t and compare outputs up to t."""
    cfg = tiny(fusion)
    model = MMVap(cfg).double().eval()
    rng = np.random.default_rng(hash(fusion) % 2 ** 32)
    t_len = 160  # longer than the attention window
    base = inputs(cfg, t=t_len, batch=1, dtype=torch.float64)
    ref = model(**base)
    for _ in range(25):
        t = int(rng.integers(0, t_len - 1))
        name = list(base)[int(rng.integers(len(base)))]
        moved = dict(base)
        moved[name] = base[name].clone()
        moved[name][:, t + 1:] += torch.as_tensor(rng.standard_normal(moved[name][:, t + 1:].shape))
        out = model(**moved)
        assert torch.max(torch.abs(out[:, :t + 1] - ref[:, :t + 1])) <= 1e-6
        assert not torch.equal(out[:, t + 1:], ref[:, t + 1:])


def test_missing_input_and_length_mismatch():
    cfg = tiny("late")
    x = inputs(cfg)
    with pytest.raises(ShapeMismatch):
        MMVap(cfg)(audio_a=x["audio_a"], audio_b=x["audio_b"])
    x["video_b"] = x["video_b"][:, :10]
    with pytest.raises(ShapeMismatch):
        MMVap(cfg)(**x)


def test_bad_config():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=3)
    with pytest.raises(ConfigError):
        ModelConfig(context_frames=50)
    with pytest.raises(ConfigError):
        ModelConfig(fusion="middle")


def test_loss_examples():
    labels = torch.tensor([[3, 7, 255]])
    mask = torch.ones(1, 3, dtype=torch.bool)
    uniform = torch.zeros(1, 3, 256)
    assert float(vap_loss(uniform, labels, mask)) == pytest.approx(math.log(256), abs=1e-6)
    onehot = torch.full((1, 3, 256), -1e4)
    onehot[0, [0, 1, 2], [3, 7, 255]] = 0
    assert float(vap_loss(onehot, labels, mask)) == pytest.approx(0.0, abs=1e-6)
    assert loss_from_probs(onehot.softmax(-1), labels, mask) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(EmptyMask):
        vap_loss(uniform, labels, torch.zeros(1, 3, dtype=torch.bool))


def test_loss_ignores_masked_frames():
    logits = torch.randn(1, 4, 256)
    labels = torch.tensor([[1, 2, 3, 4]])
    mask = torch.tensor([[True, True, False, False]])
    full = -logits.log_softmax(-1)[0, [0, 1], [1, 2]].mean()
    assert float(vap_loss(logits, labels, mask)) == pytest.approx(float(full))


def test_parameter_counts_reported(capsys):
    counts = {f: count_parameters(MMVap(ModelConfig(fusion=f))) for f in FUSIONS}
    print("trainable parameters at default size:", counts)
    assert counts["late"] > counts["audio_only"] > 0
    assert counts["early"] > counts["audio_only"]
