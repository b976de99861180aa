# Copyright (c)  2026  Fare authors
# Apache 2.0

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from fare.common import Pathlike
from fare.sim.render import bin_edges


@dataclass
class Heatmap:
    '''Non-negative recognition map at image resolution (H, W), together with
    the pre-upsampling map at feature-map resolution.'''
    values: Tensor
    raw: Tensor

    def __post_init__(self):
        if self.values.dim() != 2 or self.raw.dim() != 2:
            raise ValueError(f'Heatmap expects 2-D maps, got {list(self.values.shape)} and {list(self.raw.shape)}')
        if (self.values < 0).any():
            raise ValueError('Heatmap values must be non-negative')

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.values.shape)


def bilinear_upsample(raw: Tensor, height: int, width: int) -> Tensor:
    '''Bilinearly resize (h, w) or (N, h, w) maps to (height, width).

    Sampling uses half-pixel centers, so every output value is a convex
    combination of input values and stays within [min(raw), max(raw)].
    '''
    squeeze = raw.dim() == 2
    x = raw[None, None] if squeeze else raw[:, None]
    y = F.interpolate(x, size=(height, width), mode='bilinear', align_corners=False)
    return y[0, 0] if squeeze else y[:, 0]


def bin_sums(values: Tensor) -> Tuple[float, float, float]:
    '''Sum of the map over the left, middle and right column bins.'''
    edges = bin_edges(values.shape[-1])
    return tuple(float(values[..., edges[k]:edges[k + 1]].sum()) for k in range(3))


def write_pgm(filename: Pathlike, values: Tensor) -> None:
    '''Write a map as an 8-bit binary PGM (P5) after normalizing by its max;
    an all-zero map is written black.'''
    a = values.detach().cpu().numpy().astype(np.float64)
    peak = a.max() if a.size else 0.0
    if peak > 0:
        a = a / peak
    pixels = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(Path(filename), 'wb') as f:
        f.write(f'P5\n{w} {h}\n255\n'.encode('ascii'))
        f.write(pixels.tobytes())
