"""Two-stream co-occurrence features with a learnable joint/time mask and
multi-headed self-attention over time."""
from __future__ import annotations

import math
from typing import Optional, Tuple

import torch
from torch import nn


def frame_difference(seq: torch.Tensor) -> torch.Tensor:
    """First difference along time (axis -2) with a zero frame prepended, so length is kept."""
    diff = seq[..., 1:, :] - seq[..., :-1, :]
    return torch.cat([torch.zeros_like(seq[..., :1, :]), diff], dim=-2)


class PointStream(nn.Module):
    """Point-level convolutions over (channel, time), applied to each joint alike."""

    def __init__(self, in_channels: int = 4, width: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, width, 1)
        self.conv2 = nn.Conv2d(width, width, (3, 1), stride=(2, 1), padding=(1, 0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.conv2(torch.relu(self.conv1(x))))


def attention_mask(f_s: torch.Tensor, f_t: torch.Tensor, mask_conv: Optional[nn.Conv2d]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Gate the concatenated stream features with ``sigmoid(conv(concat(f_s, f_t)))``.

    ``f_s`` and ``f_t`` are ``(B, C, T_f, N_j)``. ``mask_conv`` is a 1x1
    convolution from ``2C`` channels to one, so the mask is one weight per
    (time step, joint), broadcast over channels. Passing ``None`` ablates the
    mask (all ones). Returns ``(masked, mask)``.
    """
    if f_s.shape != f_t.shape:
        raise ValueError(f"stream features differ in shape: {tuple(f_s.shape)} vs {tuple(f_t.shape)}")
    both = torch.cat([f_s, f_t], dim=1)
    if mask_conv is None:
        mask = torch.ones_like(both[:, :1])
    else:
        mask = torch.sigmoid(mask_conv(both))
    return both * mask, mask


def sinusoidal_positions(T: int, width: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(T, dtype=dtype)[:, None]
    freq = torch.exp(torch.arange(0, width, 2, dtype=dtype) * (-math.log(10000.0) / width))
    pe = torch.zeros(T, width, dtype=dtype)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq[: width // 2])
    return pe


class TemporalSelfAttention(nn.Module):
    """Scaled dot-product multi-head attention across time steps, with a residual."""

    def __init__(self, width: int = 32, heads: int = 4, positional: bool = False):
        super().__init__()
        if width % heads:
            raise ValueError(f"{heads} heads do not divide attention width {width}")
        self.width, self.heads, self.positional = width, heads, positional
        self.query = nn.Linear(width, width)
        self.key = nn.Linear(width, width)
        self.value = nn.Linear(width, width)
        self.out = nn.Linear(width, width)

    def attend(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Pre-residual output ``(B, C, T)`` and weights ``(B, heads, T, T)`` for ``x`` ``(B, C, T)``."""
        if x.shape[1] != self.width:
            raise ValueError(f"expected {self.width} channels, got {x.shape[1]}")
        B, C, T = x.shape
        seq = x.transpose(1, 2)
        qk_in = seq + sinusoidal_positions(T, C, seq.dtype) if self.positional else seq
        d = C // self.heads

        def split(t):
            return t.reshape(B, T, self.heads, d).transpose(1, 2)

        q, k, v = split(self.query(qk_in)), split(self.key(qk_in)), split(self.value(seq))
        weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d), dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(B, T, C)
        return self.out(ctx).transpose(1, 2), weights

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.attend(x)[0]


class AttentionFeatureNet(nn.Module):
    """Skeleton sequences ``(B, 4, T, N_j)`` -> per-time-step features ``(B, C, T_f)``.

    Both streams run point-level convolutions; their outputs are gated by the
    joint/time mask, joints are moved onto the channel axis for two
    co-occurrence convolutions, the remaining axis is max-pooled, and temporal
    self-attention follows. ``use_attention=False`` drops both the mask and
    the temporal attention, leaving the plain two-stream path.
    """

    def __init__(self, n_joints: int = 14, widths=(16, 32), heads: int = 4,
                 use_attention: bool = True, positional: bool = False):
        super().__init__()
        c1, c2 = widths
        self.n_joints, self.use_attention = n_joints, use_attention
        self.spatial = PointStream(4, c1)
        self.temporal = PointStream(4, c1)
        self.mask_conv = nn.Conv2d(2 * c1, 1, 1)
        self.cooc1 = nn.Conv2d(n_joints, c2, 3, padding=1)
        self.cooc2 = nn.Conv2d(c2, c2, 3, padding=1)
        self.attention = TemporalSelfAttention(c2, heads, positional)

    @property
    def out_channels(self) -> int:
        return self.cooc2.out_channels

    def _check(self, seq: torch.Tensor):
        if seq.ndim != 4 or seq.shape[1] != 4 or seq.shape[3] != self.n_joints:
            raise ValueError(f"expected (B, 4, T, {self.n_joints}) sequences, got {tuple(seq.shape)}")

    def spatial_stream(self, seq: torch.Tensor) -> torch.Tensor:
        self._check(seq)
        return self.spatial(seq)

    def temporal_stream(self, seq: torch.Tensor) -> torch.Tensor:
        self._check(seq)
        return self.temporal(frame_difference(seq))

    def stream_features(self, seq: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.spatial_stream(seq), self.temporal_stream(seq)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        f_s, f_t = self.stream_features(seq)
        masked, _ = attention_mask(f_s, f_t, self.mask_conv if self.use_attention else None)
        x = masked.permute(0, 3, 2, 1)  # joints -> channels: (B, N_j, T_f, 2C)
        x = torch.relu(self.cooc2(torch.relu(self.cooc1(x))))
        x = x.max(dim=-1).values  # (B, C, T_f)
        return self.attention(x) if self.use_attention else x
