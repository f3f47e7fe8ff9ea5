"""VGG-19 backbone: weight loading and five-level feature pyramid extraction.

The backbone runs the 13 convolution layers up to conv5_1 and taps the
feature maps after relu1_1, relu2_1, relu3_1, relu4_1 and relu5_1.  Weights
come from the little-endian NBBW binary format (see ``load_weights``).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor import ConvLayer, bilinear_resize, conv2d, maxpool2, relu

MAGIC = b"NBBW"
FORMAT_VERSION = 1
NORMALIZATION_UNIT_MEANSTD = 1

# ImageNet statistics matching normalization tag 1.
CHANNEL_MEAN = (0.485, 0.456, 0.406)
CHANNEL_STD = (0.229, 0.224, 0.225)

# (name, out_channels, in_channels); all kernels are 3x3.
LAYER_SCHEMA = (
    ("conv1_1", 64, 3),
    ("conv1_2", 64, 64),
    ("conv2_1", 128, 64),
    ("conv2_2", 128, 128),
    ("conv3_1", 256, 128),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv3_4", 256, 256),
    ("conv4_1", 512, 256),
    ("conv4_2", 512, 512),
    ("conv4_3", 512, 512),
    ("conv4_4", 512, 512),
    ("conv5_1", 512, 512),
)

LEVEL_CHANNELS = (64, 128, 256, 512, 512)


class WeightFormatError(Exception):
    """Bad magic, version or normalization tag in a weight file."""


class WeightSchemaError(Exception):
    """Layer names or shapes do not match the expected 13-layer schema."""


class WeightTruncationError(Exception):
    """Weight file ended before the declared payload was read."""


@dataclass(frozen=True)
class BackboneWeights:
    layers: tuple[ConvLayer, ...]
    normalization: int = NORMALIZATION_UNIT_MEANSTD


@dataclass(frozen=True)
class FeaturePyramid:
    """Per-level feature maps F (levels 1..5) and normalized activations H.

    ``features[i]`` and ``activations[i]`` belong to level i+1; activation
    maps are 2-D (height, width) arrays with values in [0, 1].
    """

    features: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...] = field(repr=False)
    input_size: tuple[int, int] = (0, 0)      # (height, width) after canonicalization
    original_size: tuple[int, int] = (0, 0)   # (height, width) of the source image


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int, context: str) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightTruncationError(f"{self.path}: file truncated while reading {context}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, context: str) -> int:
        return self.take(1, context)[0]

    def u16(self, context: str) -> int:
        return struct.unpack("<H", self.take(2, context))[0]

    def u32(self, context: str) -> int:
        return struct.unpack("<I", self.take(4, context))[0]


def load_weights(path: str) -> BackboneWeights:
    """Load and validate backbone weights from an NBBW file.

    Layout (little-endian, no padding): magic "NBBW", version u32, normalization
    tag u8, layer_count u32, then per layer: name_len u16, name bytes, out u32,
    in u32, kh u32, kw u32, weights f32[out*in*kh*kw] in (out, in, kh, kw)
    order, biases f32[out].
    """
    with open(path, "rb") as fh:
        rd = _Reader(fh.read(), str(path))

    if rd.take(4, "magic") != MAGIC:
        raise WeightFormatError(f"{path}: not an NBBW file (bad magic)")
    version = rd.u32("version")
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"{path}: unsupported NBBW version {version}")
    normalization = rd.u8("normalization tag")
    if normalization != NORMALIZATION_UNIT_MEANSTD:
        raise WeightFormatError(f"{path}: unknown normalization tag {normalization}")
    layer_count = rd.u32("layer count")
    if layer_count != len(LAYER_SCHEMA):
        raise WeightSchemaError(f"{path}: expected {len(LAYER_SCHEMA)} layers, header says {layer_count}")

    layers = []
    for name, out_c, in_c in LAYER_SCHEMA:
        name_len = rd.u16(f"name length of layer {len(layers)}")
        got_name = rd.take(name_len, f"name of layer {len(layers)}").decode("utf-8")
        if got_name != name:
            raise WeightSchemaError(f"{path}: expected layer {name!r}, found {got_name!r}")
        shape = tuple(rd.u32(f"{name} shape") for _ in range(4))
        if shape != (out_c, in_c, 3, 3):
            raise WeightSchemaError(f"{path}: layer {name} has shape {shape}, "
                                    f"expected {(out_c, in_c, 3, 3)}")
        n_w = out_c * in_c * 9
        wbytes = rd.take(4 * n_w, f"weights of {name}")
        bbytes = rd.take(4 * out_c, f"biases of {name}")
        weights = np.frombuffer(wbytes, dtype="<f4").reshape(out_c, in_c, 3, 3)
        biases = np.frombuffer(bbytes, dtype="<f4")
        if not np.all(np.isfinite(weights)) or not np.all(np.isfinite(biases)):
            raise WeightSchemaError(f"{path}: layer {name} contains non-finite values")
        layers.append(ConvLayer(name, weights.astype(np.float32), biases.astype(np.float32)))

    return BackboneWeights(tuple(layers), normalization)


def write_weights(path: str, layers) -> None:
    """Write conv layers to an NBBW file (inverse of ``load_weights``)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<B", NORMALIZATION_UNIT_MEANSTD))
        fh.write(struct.pack("<I", len(layers)))
        for layer in layers:
            name = layer.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            kh, kw = layer.kernel_size
            fh.write(struct.pack("<IIII", layer.out_channels, layer.in_channels, kh, kw))
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(layer.biases, dtype="<f4").tobytes())


def random_weights(seed: int) -> BackboneWeights:
    """Deterministic randomized weights with the full VGG-19 layer schema.

    He-scaled so activations stay well-conditioned through the relu chain;
    used by tests that must not depend on the real pretrained checkpoint.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for name, out_c, in_c in LAYER_SCHEMA:
        scale = np.sqrt(2.0 / (in_c * 9))
        w = (rng.standard_normal((out_c, in_c, 3, 3)) * scale).astype(np.float32)
        b = (rng.standard_normal(out_c) * 0.01).astype(np.float32)
        layers.append(ConvLayer(name, w, b))
    return BackboneWeights(tuple(layers))


def preprocess(image: np.ndarray, side: int = 224) -> np.ndarray:
    """Canonicalize an RGB image (H, W, 3) to a normalized 3 x side x side map.

    Pixels are scaled to [0, 1], resized bilinearly to side x side and
    normalized per channel with the ImageNet mean/std recorded in the weight
    file header.  ``side`` must be a positive multiple of 16 so every pyramid
    level has integer dimensions.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError(f"expected a nonempty (H, W, 3) RGB image, got shape {image.shape}")
    if side <= 0 or side % 16 != 0:
        raise ValueError(f"side must be a positive multiple of 16, got {side}")

    x = image.astype(np.float32).transpose(2, 0, 1) / 255.0
    x = bilinear_resize(x, side, side)
    mean = np.array(CHANNEL_MEAN, dtype=np.float32)[:, None, None]
    std = np.array(CHANNEL_STD, dtype=np.float32)[:, None, None]
    return (x - mean) / std


def normalize_activations(feat: np.ndarray) -> np.ndarray:
    """Min-max normalized per-location channel-vector L2 norms, in [0, 1].

    A constant norm map (max == min) normalizes to all zeros, so every
    candidate at that level fails the activation filter.
    """
    if feat.ndim != 3 or feat.shape[0] < 1:
        raise ValueError(f"expected a (channels, height, width) map, got shape {feat.shape}")
    norms = np.sqrt(np.sum(feat.astype(np.float32) ** 2, axis=0))
    lo = norms.min()
    hi = norms.max()
    if hi == lo:
        return np.zeros_like(norms, dtype=np.float32)
    return ((norms - lo) / (hi - lo)).astype(np.float32)


def extract_pyramid(x: np.ndarray, weights: BackboneWeights,
                    original_size: tuple[int, int] | None = None) -> FeaturePyramid:
    """Run the conv/relu/pool chain and tap the five relu{l}_1 feature maps."""
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected a 3-channel input map, got shape {x.shape}")
    if x.shape[1] != x.shape[2] or x.shape[1] % 16 != 0:
        raise ValueError(f"input must be square with side a multiple of 16, got {x.shape[1:]}")

    by_name = {layer.name: layer for layer in weights.layers}
    # Layers per block; the first relu of each block is tapped as a pyramid level.
    blocks = (
        ("conv1_1", "conv1_2"),
        ("conv2_1", "conv2_2"),
        ("conv3_1", "conv3_2", "conv3_3", "conv3_4"),
        ("conv4_1", "conv4_2", "conv4_3", "conv4_4"),
        ("conv5_1",),
    )
    taps = []
    for bi, block in enumerate(blocks):
        if bi > 0:
            x = maxpool2(x)
        for li, name in enumerate(block):
            x = relu(conv2d(x, by_name[name], padding=1))
            if li == 0:
                taps.append(x)

    activations = tuple(normalize_activations(f) for f in taps)
    input_size = (taps[0].shape[1], taps[0].shape[2])
    return FeaturePyramid(tuple(taps), activations, input_size,
                          original_size if original_size is not None else input_size)
