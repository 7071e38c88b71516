"""Space-time-viewpoint video transformer with heatmap and classification heads.

Token layout inside the backbone is ``(B, V, T, N, D)`` with ``N = H_f * W_f``
patches per frame in row-major order.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ConfigError, ModelConfig


class Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.last_weights = None
        self.keep_weights = False

    def forward(self, x):
        B, L, D = x.shape
        qkv = self.qkv(x).reshape(B, L, 3, self.heads, D // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        if self.keep_weights:
            attn = torch.softmax((q * self.scale) @ k.transpose(-2, -1), dim=-1)
            self.last_weights = attn.detach()
            out = attn @ v
        else:
            out = F.scaled_dot_product_attention(q, k, v, scale=self.scale)
        out = out.transpose(1, 2).reshape(B, L, D)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class JointSTVBlock(nn.Module):
    """Cross-view attention at each time step, then joint space-time attention per view."""

    def __init__(self, dim, heads, mlp_ratio=4.0):
        super().__init__()
        self.norm_view = nn.LayerNorm(dim)
        self.attn_view = Attention(dim, heads)
        self.norm_st = nn.LayerNorm(dim)
        self.attn_st = Attention(dim, heads)
        self.norm_mlp = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        B, V, T, N, D = x.shape
        y = x.transpose(1, 2).reshape(B * T, V * N, D)
        y = y + self.attn_view(self.norm_view(y))
        x = y.reshape(B, T, V, N, D).transpose(1, 2)
        y = x.reshape(B * V, T * N, D)
        y = y + self.attn_st(self.norm_st(y))
        x = y.reshape(B, V, T, N, D)
        return x + self.mlp(self.norm_mlp(x))


class DividedSTVBlock(nn.Module):
    """Attention across (view, time) at each patch location, then spatial attention per frame."""

    def __init__(self, dim, heads, mlp_ratio=4.0):
        super().__init__()
        self.norm_vt = nn.LayerNorm(dim)
        self.attn_vt = Attention(dim, heads)
        self.norm_s = nn.LayerNorm(dim)
        self.attn_s = Attention(dim, heads)
        self.norm_mlp = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        B, V, T, N, D = x.shape
        y = x.permute(0, 3, 1, 2, 4).reshape(B * N, V * T, D)
        y = y + self.attn_vt(self.norm_vt(y))
        x = y.reshape(B, N, V, T, D).permute(0, 2, 3, 1, 4)
        y = x.reshape(B * V * T, N, D)
        y = y + self.attn_s(self.norm_s(y))
        x = y.reshape(B, V, T, N, D)
        return x + self.mlp(self.norm_mlp(x))


class STBlock(nn.Module):
    """Joint space-time attention within each view; views never interact."""

    def __init__(self, dim, heads, mlp_ratio=4.0):
        super().__init__()
        self.norm_st = nn.LayerNorm(dim)
        self.attn_st = Attention(dim, heads)
        self.norm_mlp = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        B, V, T, N, D = x.shape
        y = x.reshape(B * V, T * N, D)
        y = y + self.attn_st(self.norm_st(y))
        x = y.reshape(B, V, T, N, D)
        return x + self.mlp(self.norm_mlp(x))


BLOCKS = {
    "joint_stv": JointSTVBlock,
    "single_view": JointSTVBlock,
    "divided_stv": DividedSTVBlock,
    "st_concat": STBlock,
}


class PatchEmbed(nn.Module):
    """Linear patch projection plus factorized spatial, temporal and view embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D = cfg.embed_dim
        self.cfg = cfg
        self.proj = nn.Conv2d(cfg.in_channels, D, cfg.patch_size, stride=cfg.patch_size)
        self.pos_space = nn.Parameter(torch.zeros(cfg.grid * cfg.grid, D))
        self.pos_time = nn.Parameter(torch.zeros(cfg.T, D))
        self.pos_view = nn.Parameter(torch.zeros(cfg.max_views, D))

    def forward(self, x, view_ids):
        B, V, T, C, H, W = x.shape
        tok = self.proj(x.reshape(B * V * T, C, H, W)).flatten(2).transpose(1, 2)
        tok = tok.reshape(B, V, T, -1, tok.shape[-1])
        ids = torch.as_tensor(view_ids, device=x.device)
        return (tok + self.pos_space[None, None, None]
                + self.pos_time[None, None, :, None]
                + self.pos_view[ids][None, :, None, None])


class Backbone(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = PatchEmbed(cfg)
        block = BLOCKS[cfg.attention_mode]
        self.blocks = nn.ModuleList(block(cfg.embed_dim, cfg.heads, cfg.mlp_ratio)
                                    for _ in range(cfg.depth))
        self.norm = nn.LayerNorm(cfg.embed_dim)

    def select_views(self, x):
        cfg = self.cfg
        if cfg.attention_mode == "single_view" and x.shape[1] > 1:
            return x[:, cfg.root_view:cfg.root_view + 1]
        return x

    def tokens(self, x):
        """``(B, V, T, N, D)`` output tokens for input frames ``(B, V, T, C, H, W)``."""
        x = self.select_views(x)
        t = self.embed(x, self.cfg.view_ids)
        for blk in self.blocks:
            t = blk(t)
        return self.norm(t)

    def forward(self, x):
        return tokens_to_grid(self.tokens(x), self.cfg.grid)


def tokens_to_grid(t, grid):
    B, V, T, N, D = t.shape
    return t.reshape(B, V, T, grid, grid, D).permute(0, 3, 4, 2, 1, 5)


def grid_to_tokens(g):
    B, Hf, Wf, T, V, D = g.shape
    return g.permute(0, 4, 3, 1, 2, 5).reshape(B, V, T, Hf * Wf, D)


def _groups(c, max_groups=8):
    return max(g for g in range(1, max_groups + 1) if c % g == 0)


class HeatmapHead(nn.Module):
    """Nearest-neighbor 2x up-sampling stages with channel halving, then a per-pixel projection."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        stages = []
        c = cfg.embed_dim
        for _ in range(cfg.upsample_stages):
            if c % 2:
                raise ConfigError("embed_dim not divisible by 2 at every up-sampling stage")
            stages.append(nn.Sequential(
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(c, c // 2, 3, padding=1),
                nn.GroupNorm(_groups(c // 2), c // 2),
                nn.ReLU(),
            ))
            c //= 2
        self.stages = nn.Sequential(*stages)
        self.out = nn.Conv2d(c, 1, 1)
        self.channels = [cfg.embed_dim // (1 << k) for k in range(cfg.upsample_stages + 1)]

    def frames(self, x):
        """Log-probabilities ``(n, H, W)`` for per-frame feature maps ``(n, D, Hf, Wf)``."""
        # channels-last convolutions are several times faster on CPU at these widths
        x = x.contiguous(memory_format=torch.channels_last)
        logits = self.out(self.stages(x))
        n, _, H, W = logits.shape
        return torch.log_softmax(logits.reshape(n, H * W), dim=-1).reshape(n, H, W)

    def forward(self, grid, mask=None):
        """Log-probabilities ``(B, V, T, H, W)``, normalized over each frame.

        With a boolean ``mask`` of shape ``(B, V, T)`` only the selected frames
        are computed and the result is ``(n_selected, H, W)``.
        """
        B, Hf, Wf, T, V, D = grid.shape
        x = grid.permute(0, 4, 3, 5, 1, 2)  # (B, V, T, D, Hf, Wf)
        if mask is not None:
            return self.frames(x[mask])
        out = self.frames(x.reshape(B * V * T, D, Hf, Wf))
        return out.reshape(B, V, T, *out.shape[-2:])


class ClassifyHead(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D = cfg.embed_dim
        self.mlp = nn.Sequential(nn.Linear(D, D), nn.GELU(), nn.Linear(D, cfg.num_joints + 1))

    def forward(self, grid):
        """Logits ``(B, J + 1)``; the last column is the overall collision."""
        pooled = grid.mean(dim=(1, 2, 3, 4))
        return self.mlp(pooled)


@dataclass
class Predictions:
    col: torch.Tensor  # (B,) probability of any collision
    joint: torch.Tensor  # (B, J)
    map_log: torch.Tensor | None  # (B, V, T, H, W) log-probabilities
    logits: torch.Tensor  # (B, J + 1)

    @property
    def maps(self):
        return None if self.map_log is None else self.map_log.exp()


class CopilotNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg)
        self.heatmap_head = HeatmapHead(cfg)
        self.classify_head = ClassifyHead(cfg)
        self.apply(_init_weights)
        for p in (self.backbone.embed.pos_space, self.backbone.embed.pos_time,
                  self.backbone.embed.pos_view):
            nn.init.trunc_normal_(p, std=0.02)

    def check_input(self, x):
        cfg = self.cfg
        if x.ndim != 6:
            raise ValueError(f"expected (B, V, T, C, H, W) frames, got shape {tuple(x.shape)}")
        _, V, T, C, H, W = x.shape
        want_v = (1, cfg.V) if cfg.attention_mode == "single_view" else (cfg.V,)
        if V not in want_v or T != cfg.T or C != cfg.in_channels or H != W or H != cfg.image_size:
            raise ValueError(f"frames {tuple(x.shape[1:])} do not match config "
                             f"(V={cfg.V}, T={cfg.T}, C={cfg.in_channels}, side={cfg.image_size})")

    def forward(self, x, with_maps=True, map_mask=None) -> Predictions:
        """Predict from frames ``(B, V, T, C, H, W)``.

        ``map_mask`` (``(B, V_out, T)`` bool) restricts the heatmap head to the
        selected frames; ``map_log`` is then ``(n_selected, H, W)``.
        """
        self.check_input(x)
        grid = self.backbone(x)
        logits = self.classify_head(grid)
        probs = torch.sigmoid(logits)
        map_log = None
        if with_maps:
            map_log = self.heatmap_head(grid, map_mask)
        return Predictions(probs[:, -1], probs[:, :-1], map_log, logits)


def _init_weights(m):
    if isinstance(m, (nn.Linear, nn.Conv2d)):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)
