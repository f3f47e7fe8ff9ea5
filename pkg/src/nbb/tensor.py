"""Dense numerical kernels for CNN inference and patch arithmetic.

Feature maps are numpy float32 arrays of shape (channels, height, width);
each channel plane is contiguous, matching the channel-major layout used
throughout the pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConvLayer:
    """Parameters of a single convolution layer.

    ``weights`` has shape (out_channels, in_channels, kh, kw) and
    ``biases`` has shape (out_channels,); both are float32.
    """

    name: str
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ValueError(f"{self.name}: weights must be 4-D, got {self.weights.ndim}-D")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError(f"{self.name}: bias length {self.biases.shape} does not match "
                             f"{self.weights.shape[0]} output channels")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


def _check_map(x: np.ndarray) -> None:
    if x.ndim != 3:
        raise ValueError(f"expected a (channels, height, width) array, got shape {x.shape}")


def conv2d(x: np.ndarray, layer: ConvLayer, padding: int) -> np.ndarray:
    """Same-size stride-1 convolution with zero padding.

    ``padding`` must equal (kernel - 1) / 2 so the output keeps the input's
    spatial dimensions.
    """
    _check_map(x)
    c, h, w = x.shape
    if layer.in_channels != c:
        raise ValueError(f"{layer.name}: input has {c} channels, layer expects {layer.in_channels}")
    kh, kw = layer.kernel_size
    if kh % 2 == 0 or kw % 2 == 0 or padding != (kh - 1) // 2 or padding != (kw - 1) // 2:
        raise ValueError(f"{layer.name}: padding {padding} does not give same-size output "
                         f"for kernel {kh}x{kw}")

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    # im2col: gather every kh x kw window, then one matmul per image.
    cols = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = cols.transpose(1, 2, 0, 3, 4).reshape(h * w, c * kh * kw)
    wmat = layer.weights.reshape(layer.out_channels, c * kh * kw)
    out = cols @ wmat.T + layer.biases
    return np.ascontiguousarray(out.T.reshape(layer.out_channels, h, w).astype(np.float32, copy=False))


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    _check_map(x)
    return np.maximum(x, 0)


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling with stride 2; spatial dimensions must be even."""
    _check_map(x)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def bilinear_resize(x: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resampling with corner-aligned sample mapping.

    Corner alignment makes resizing to the same size the exact identity and
    keeps corner coordinates fixed under round-trips.
    """
    _check_map(x)
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be positive, got {new_h}x{new_w}")
    c, h, w = x.shape
    if (new_h, new_w) == (h, w):
        return x.copy()

    ys = np.linspace(0.0, h - 1, new_h)
    xs = np.linspace(0.0, w - 1, new_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(np.float32)[:, None]
    fx = (xs - x0).astype(np.float32)[None, :]

    top = x[:, y0][:, :, x0] * (1 - fx) + x[:, y0][:, :, x1] * fx
    bot = x[:, y1][:, :, x0] * (1 - fx) + x[:, y1][:, :, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)
