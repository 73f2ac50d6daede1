from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
import torch
import torch.nn as nn

from glsed.algorithms.utils.util import init


@dataclass(frozen=True)
class EncoderConfig:
    """
    CNN encoder layout: input batch norm, then per stage a CNN block and a max pool.
    :param variant: (str) "PS" (fine time resolution) or "PT" (coarse time resolution).
    :param channels: (Tuple[int]) output channels of each CNN block.
    :param kernel_sizes: (Tuple[int]) square kernel size of each block.
    :param time_pools: (Tuple[int]) time pooling factor after each block.
    :param freq_pools: (Tuple[int]) frequency pooling factor after each block.
    """
    variant: str = "PS"
    channels: Tuple[int, ...] = (64, 128, 160)
    kernel_sizes: Tuple[int, ...] = (3, 3, 3)
    time_pools: Tuple[int, ...] = (1, 1, 1)
    freq_pools: Tuple[int, ...] = (4, 4, 4)
    n_frames: int = 500
    n_mels: int = 64
    use_orthogonal: bool = True

    def __post_init__(self):
        assert self.variant in ("PS", "PT"), f"unknown encoder variant {self.variant}"
        stages = {len(self.channels), len(self.kernel_sizes), len(self.time_pools), len(self.freq_pools)}
        assert stages == {3}, "the encoder has exactly 3 CNN blocks and 3 pooling stages"

    @classmethod
    def ps(cls, **overrides) -> 'EncoderConfig':
        return cls(**{**dict(variant="PS"), **overrides})

    @classmethod
    def pt(cls, **overrides) -> 'EncoderConfig':
        return cls(**{**dict(variant="PT", channels=(48, 64, 160), time_pools=(4, 4, 4)), **overrides})

    @property
    def time_pooling(self) -> int:
        return int(np.prod(self.time_pools))

    @property
    def output_frames(self) -> int:
        t = self.n_frames
        for p in self.time_pools:
            t //= p
        return t

    @property
    def output_bands(self) -> int:
        f = self.n_mels
        for p in self.freq_pools:
            f //= p
        return f

    @property
    def output_dim(self) -> int:
        return self.channels[-1] * self.output_bands

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> 'EncoderConfig':
        values = dict(values)
        for key in ("channels", "kernel_sizes", "time_pools", "freq_pools"):
            values[key] = tuple(values[key])
        return cls(**values)


class CNNBlock(nn.Module):
    """Conv2d -> BatchNorm -> ReLU -> MaxPool over (time, frequency)."""

    def __init__(self, in_channels, out_channels, kernel_size, pool_size, use_orthogonal):
        super(CNNBlock, self).__init__()

        init_method = [nn.init.xavier_uniform_, nn.init.orthogonal_][use_orthogonal]
        gain = nn.init.calculate_gain('relu')

        def init_(m):
            return init(m, init_method, lambda x: nn.init.constant_(x, 0), gain=gain)

        self.conv = init_(nn.Conv2d(in_channels=in_channels,
                                    out_channels=out_channels,
                                    kernel_size=kernel_size,
                                    padding=kernel_size // 2))
        self.bn = nn.BatchNorm2d(out_channels)
        self.pool = nn.MaxPool2d(kernel_size=pool_size)

    def forward(self, x):
        return self.pool(torch.relu(self.bn(self.conv(x))))


class CNNEncoder(nn.Module):
    """
    Encodes a batch of log-mel grids into high-level frame features.
    :param config: (EncoderConfig) block layout.
    """

    def __init__(self, config: EncoderConfig):
        super(CNNEncoder, self).__init__()
        self.config = config
        self.input_norm = nn.BatchNorm2d(1)

        blocks = []
        in_channels = 1
        for out_channels, kernel_size, tp, fp in zip(config.channels, config.kernel_sizes,
                                                     config.time_pools, config.freq_pools):
            blocks.append(CNNBlock(in_channels, out_channels, kernel_size, (tp, fp), config.use_orthogonal))
            in_channels = out_channels
        self.blocks = nn.Sequential(*blocks)

    def forward(self, x):
        """
        :param x: (torch.Tensor) B x T x F log-mel features.

        :return features: (torch.Tensor) B x T' x d high-level features.
        """
        if x.dim() != 3 or tuple(x.shape[1:]) != (self.config.n_frames, self.config.n_mels):
            raise ValueError(f"expected B x {self.config.n_frames} x {self.config.n_mels} input, "
                             f"got {tuple(x.shape)}")
        x = self.blocks(self.input_norm(x.unsqueeze(1)))
        b, c, t, f = x.shape
        return x.permute(0, 2, 1, 3).reshape(b, t, c * f)
