from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import torch
from torch import nn


@dataclass
class FeatureMaps:
    horizontal: torch.Tensor  # (B, C, T', H', W')
    vertical: torch.Tensor    # (B, C, T', H', W'')

    def __getitem__(self, i) -> "FeatureMaps":
        return FeatureMaps(self.horizontal[i], self.vertical[i])


def _conv_out(n: int, stride: int, kernel: int = 3, pad: int = 1) -> int:
    return (n + 2 * pad - kernel) // stride + 1


class FeatureNet(nn.Module):
    """Two spatio-temporal convolution stacks, one per heatmap view.

    Every block is a 3x3x3 convolution followed by ReLU; ``strides`` gives the
    (time, space) stride of each block.
    """

    def __init__(
        self,
        widths: Sequence[int] = (8, 16, 32, 32),
        strides: Sequence[Tuple[int, int]] = ((1, 2), (1, 2), (2, 1), (2, 1)),
        window: int = 30,
        horizontal: Tuple[int, int] = (64, 64),
        vertical: Tuple[int, int] = (64, 32),
    ):
        super().__init__()
        if len(widths) != len(strides):
            raise ValueError("one stride pair per block")
        self.widths, self.strides = tuple(widths), tuple(tuple(s) for s in strides)
        self.window, self.horizontal_shape, self.vertical_shape = window, tuple(horizontal), tuple(vertical)
        self.horizontal = self._stack()
        self.vertical = self._stack()

    def _stack(self) -> nn.Sequential:
        layers, cin = [], 1
        for c, (st, ss) in zip(self.widths, self.strides):
            layers += [nn.Conv3d(cin, c, 3, stride=(st, ss, ss), padding=1), nn.ReLU()]
            cin = c
        return nn.Sequential(*layers)

    @property
    def out_channels(self) -> int:
        return self.widths[-1]

    @property
    def temporal_stride(self) -> int:
        out = 1
        for st, _ in self.strides:
            out *= st
        return out

    @property
    def spatial_stride(self) -> int:
        out = 1
        for _, ss in self.strides:
            out *= ss
        return out

    def output_shape(self, T: int, H: int, W: int) -> Tuple[int, int, int, int]:
        """``(C, T', H', W')`` for an input of ``T x H x W``."""
        for st, ss in self.strides:
            T, H, W = _conv_out(T, st), _conv_out(H, ss), _conv_out(W, ss)
        return (self.out_channels, T, H, W)

    def forward(self, horizontal: torch.Tensor, vertical: torch.Tensor) -> FeatureMaps:
        """Inputs are ``(B, T, H, W)`` heatmap windows."""
        if horizontal.ndim != 4 or tuple(horizontal.shape[1:]) != (self.window, *self.horizontal_shape):
            raise ValueError(
                f"horizontal window must be (B, {self.window}, {self.horizontal_shape[0]}, "
                f"{self.horizontal_shape[1]}), got {tuple(horizontal.shape)}"
            )
        if vertical.ndim != 4 or tuple(vertical.shape[1:]) != (self.window, *self.vertical_shape):
            raise ValueError(
                f"vertical window must be (B, {self.window}, {self.vertical_shape[0]}, "
                f"{self.vertical_shape[1]}), got {tuple(vertical.shape)}"
            )
        return FeatureMaps(self.horizontal(horizontal.unsqueeze(1)), self.vertical(vertical.unsqueeze(1)))
