"""Small model configurations and probes shared by the model and acceptance tests."""

import torch

from mmvap.model import MMVap, ModelConfig, vap_loss


def tiny(fusion="late", **kw):
    base = dict(d_model=8, n_heads=2, n_self_layers=1, n_cross_layers=1, context_frames=100,
                fusion=fusion, visual_dims=6, audio_dims=5, dropout=0.0, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def inputs(cfg, t=25, batch=2, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    out = {}
    if cfg.uses_audio:
        out["audio_a"] = torch.randn(batch, t, cfg.audio_dims, generator=g, dtype=dtype)
        out["audio_b"] = torch.randn(batch, t, cfg.audio_dims, generator=g, dtype=dtype)
    if cfg.uses_video:
        out["video_a"] = torch.randn(batch, t, cfg.visual_dims, generator=g, dtype=dtype)
        out["video_b"] = torch.randn(batch, t, cfg.visual_dims, generator=g, dtype=dtype)
    return out


def fd_gradient_check(fusion, t=25, eps=1e-4, n_self_layers=1):
    # float64 central differences: 1e-6 steps are roundoff-dominated on ~1e-6 gradients
    cfg = tiny(fusion, n_self_layers=n_self_layers)
    model = MMVap(cfg).double()
    x = inputs(cfg, t=t, batch=1, dtype=torch.float64)
    g = torch.Generator().manual_seed(1)
    labels = torch.randint(0, 256, (1, t), generator=g)
    mask = torch.rand(1, t, generator=g) > 0.2

    def loss():
        return vap_loss(model(**x), labels, mask)

    model.zero_grad()
    loss().backward()
    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat, grad = p.view(-1), p.grad.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + eps
                up = loss().item()
                flat[i] = old - eps
                down = loss().item()
                flat[i] = old
                num, ana = (up - down) / (2 * eps), grad[i].item()
                scale = max(abs(num), abs(ana))
                if scale > 1e-7:
                    worst = max(worst, abs(num - ana) / scale)
    return worst
