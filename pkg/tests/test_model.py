import numpy as np
import pytest
import torch
from oracles import fd_check, single_stream_reference, well_scaled

from copilot.model import ConfigError, CopilotNet, ModelConfig
from copilot.model.network import ClassifyHead, grid_to_tokens, tokens_to_grid

TINY = dict(V=2, T=2, image_size=8, patch_size=4, embed_dim=16, heads=2, depth=1)


def _net(seed=0, dtype=torch.float64, **kw):
    torch.manual_seed(seed)
    return CopilotNet(ModelConfig(**{**TINY, **kw})).to(dtype)


def _x(cfg, b=2, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(b, cfg.V, cfg.T, cfg.in_channels, cfg.image_size, cfg.image_size, generator=g, dtype=dtype)


def test_desk_shapes():
    torch.manual_seed(0)
    cfg = ModelConfig()
    net = CopilotNet(cfg)
    with torch.no_grad():
        grid = net.backbone(torch.rand(1, 3, 10, 1, 64, 64))
    assert grid.shape == (1, 8, 8, 10, 3, 128)
    assert net.heatmap_head.channels == [128, 64, 32, 16]


def test_tokens_per_frame():
    cfg = ModelConfig(V=1, T=1, embed_dim=16, heads=2, depth=1)
    net = CopilotNet(cfg)
    assert net.backbone.embed(torch.rand(1, 1, 1, 1, 64, 64), (0,)).shape[3] == 64


def test_zero_input_tokens_are_bias_plus_positions():
    net = _net()
    cfg = net.cfg
    emb = net.backbone.embed
    tok = emb(torch.zeros(1, cfg.V, cfg.T, 1, 8, 8, dtype=torch.float64), cfg.view_ids)[0]
    want = (emb.proj.bias + emb.pos_space[None, None] + emb.pos_time[None, :, None]
            + emb.pos_view[list(cfg.view_ids)][:, None, None])
    assert torch.allclose(tok, want)


def test_identical_views_differ_by_view_embedding():
    net = _net()
    emb = net.backbone.embed
    frame = torch.rand(1, 1, 2, 1, 8, 8, dtype=torch.float64)
    tok = emb(frame.expand(1, 2, 2, 1, 8, 8), (0, 1))[0]
    diff = tok[1] - tok[0]
    assert torch.allclose(diff, (emb.pos_view[1] - emb.pos_view[0]).expand_as(diff))


def test_grid_token_round_trip():
    t = torch.rand(2, 3, 4, 9, 5)
    assert torch.equal(grid_to_tokens(tokens_to_grid(t, 3)), t)


def test_attention_rows_sum_to_one():
    net = _net()
    for m in net.modules():
        if hasattr(m, "keep_weights"):
            m.keep_weights = True
    with torch.no_grad():
        net(_x(net.cfg))
    for m in net.modules():
        if hasattr(m, "keep_weights"):
            assert torch.allclose(m.last_weights.sum(-1), torch.ones((), dtype=torch.float64), atol=1e-6)


def test_keep_weights_path_matches_fused():
    net = _net()
    x = _x(net.cfg)
    with torch.no_grad():
        a = net(x).logits
        for m in net.modules():
            if hasattr(m, "keep_weights"):
                m.keep_weights = True
        b = net(x).logits
    assert torch.allclose(a, b, atol=1e-10)


def test_single_view_reduction_matches_reference():
    net = _net(V=1, depth=2)
    params = dict(net.named_parameters())
    for s in range(5):
        x = _x(net.cfg, b=1, seed=s)
        with torch.no_grad():
            got = net.backbone.tokens(x)[0, 0].numpy()
        ref = single_stream_reference(params, x[0, 0].numpy(), 4, 2, 2)
        assert np.abs(got - ref).max() < 1e-6


def test_single_view_uses_pelvis_stream():
    net = _net(V=6, attention_mode="single_view")
    x = _x(net.cfg, b=1)
    with torch.no_grad():
        full = net(x)
        only = net(x[:, 1:2])
    assert full.map_log.shape[1] == 1
    assert torch.allclose(full.logits, only.logits)
    y = x.clone()
    y[:, 0] = 0
    y[:, 2:] = 0
    with torch.no_grad():
        assert torch.allclose(net(y).logits, full.logits)


def test_joint_and_st_concat_differ():
    joint = _net()
    st = _net(attention_mode="st_concat")
    st.load_state_dict(joint.state_dict(), strict=False)
    x = _x(joint.cfg)
    with torch.no_grad():
        d = (joint.backbone(x) - st.backbone(x)).abs().max()
    assert d > 1e-3


@pytest.mark.parametrize("mode", ["joint_stv", "divided_stv", "st_concat", "single_view"])
def test_modes_run(mode):
    net = _net(attention_mode=mode)
    p = net(_x(net.cfg))
    assert p.col.shape == (2,) and p.joint.shape == (2, 10)
    assert p.map_log.shape == (2, net.cfg.out_views, 2, 8, 8)


def test_heatmaps_normalized():
    net = _net(dtype=torch.float32)
    with torch.no_grad():
        m = net(_x(net.cfg, dtype=torch.float32)).maps
    assert torch.allclose(m.sum((-1, -2)), torch.ones(()), atol=1e-5)


def test_classify_range_and_pooling():
    cfg = ModelConfig(**TINY)
    head = ClassifyHead(cfg).double()
    g = torch.rand(3, 2, 2, 2, 2, 16, dtype=torch.float64)
    out = torch.sigmoid(head(g))
    assert out.shape == (3, 11) and ((out >= 0) & (out <= 1)).all()
    # permuting time leaves the output unchanged
    assert torch.allclose(head(g), head(g[:, :, :, [1, 0]]))
    # and so does moving cells around the grid
    assert torch.allclose(head(g), head(torch.roll(g, 1, dims=1)))


def test_bad_input_shape():
    net = _net()
    with pytest.raises(ValueError):
        net(torch.rand(1, 3, 2, 1, 8, 8, dtype=torch.float64))
    with pytest.raises(ValueError):
        net(torch.rand(2, 1, 8, 8, dtype=torch.float64))


@pytest.mark.parametrize("kw", [dict(attention_mode="bogus"), dict(embed_dim=18, heads=2, patch_size=4),
                                dict(image_size=10), dict(modality="thermal"), dict(patch_size=6, image_size=12)])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**{**TINY, **kw})


def _batch(cfg, b=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    maps = torch.rand(b, cfg.V, cfg.T, cfg.image_size, cfg.image_size, generator=g, dtype=torch.float64)
    return {"frames": _x(cfg, b, seed), "heatmaps": maps / maps.sum((-1, -2), keepdim=True),
            "heatmap_valid": torch.rand(b, cfg.V, cfg.T, generator=g) < 0.7,
            "y_col": torch.tensor([1.0, 0.0], dtype=torch.float64)[:b],
            "y_joint": (torch.rand(b, 10, generator=g) < 0.3).double()}


def test_gradients_match_finite_differences():
    net = well_scaled(_net(seed=1), seed=1)
    worst, checked, _ = fd_check(net, _batch(net.cfg), n_entries=3)
    assert checked > 0 and worst < 1e-3
