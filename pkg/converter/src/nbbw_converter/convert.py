"""Convert a pretrained VGG-19 checkpoint to the NBBW weight format.

Usage:
    nbbw-convert <checkpoint.pth> <out.nbbw>
    nbbw-convert --random --seed 0 <ignored> <out.nbbw>

Reads a PyTorch state dict (torchvision layer numbering or plain conv names),
extracts the 13 convolution layers up to conv5_1 and writes them as a single
little-endian NBBW file.  A manifest JSON with source/output hashes and the
layer table is written next to the output.  ``--random`` emits a seeded
random-weight file with the same schema instead, so test suites can run
without the real checkpoint.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import struct
import sys

import numpy as np

MAGIC = b"NBBW"
FORMAT_VERSION = 1
NORMALIZATION_TAG = 1  # [0,1] scaling + ImageNet mean/std

# (name, out_channels, in_channels, torchvision features index)
LAYERS = (
    ("conv1_1", 64, 3, 0),
    ("conv1_2", 64, 64, 2),
    ("conv2_1", 128, 64, 5),
    ("conv2_2", 128, 128, 7),
    ("conv3_1", 256, 128, 10),
    ("conv3_2", 256, 256, 12),
    ("conv3_3", 256, 256, 14),
    ("conv3_4", 256, 256, 16),
    ("conv4_1", 512, 256, 19),
    ("conv4_2", 512, 512, 21),
    ("conv4_3", 512, 512, 23),
    ("conv4_4", 512, 512, 25),
    ("conv5_1", 512, 512, 28),
)


class CheckpointSchemaError(Exception):
    """Checkpoint is missing a required layer or has wrong shapes."""


def _find_tensor(state: dict, name: str, index: int, kind: str):
    for key in (f"{name}.{kind}", f"features.{index}.{kind}", f"{index}.{kind}"):
        if key in state:
            return state[key]
    return None


def load_checkpoint_layers(path: str) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Read the 13 conv layers from a PyTorch checkpoint as float32 arrays."""
    import torch  # deferred so --random mode has no torch dependency

    state = torch.load(path, map_location="cpu", weights_only=True)
    if hasattr(state, "state_dict"):
        state = state.state_dict()
    if "state_dict" in state and isinstance(state["state_dict"], dict):
        state = state["state_dict"]

    layers = []
    for name, out_c, in_c, idx in LAYERS:
        weight = _find_tensor(state, name, idx, "weight")
        bias = _find_tensor(state, name, idx, "bias")
        if weight is None or bias is None:
            raise CheckpointSchemaError(f"checkpoint is missing layer {name}")
        weight = weight.detach().cpu().numpy().astype(np.float32, copy=False)
        bias = bias.detach().cpu().numpy().astype(np.float32, copy=False)
        if weight.shape != (out_c, in_c, 3, 3) or bias.shape != (out_c,):
            raise CheckpointSchemaError(
                f"layer {name} has shape {weight.shape}, expected {(out_c, in_c, 3, 3)}")
        layers.append((name, weight, bias))
    return layers


def random_layers(seed: int) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Seeded random weights with the full 13-layer schema (He-scaled)."""
    rng = np.random.default_rng(seed)
    layers = []
    for name, out_c, in_c, _ in LAYERS:
        scale = np.sqrt(2.0 / (in_c * 9))
        w = (rng.standard_normal((out_c, in_c, 3, 3)) * scale).astype(np.float32)
        b = (rng.standard_normal(out_c) * 0.01).astype(np.float32)
        layers.append((name, w, b))
    return layers


def write_nbbw(path: str, layers) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<B", NORMALIZATION_TAG))
        fh.write(struct.pack("<I", len(layers)))
        for name, weight, bias in layers:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<IIII", *weight.shape))
            fh.write(np.ascontiguousarray(weight, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(bias, dtype="<f4").tobytes())


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def convert(checkpoint: str, output: str, random: bool = False, seed: int = 0) -> dict:
    """Write the NBBW file and its manifest; returns the manifest."""
    if random:
        layers = random_layers(seed)
        source = {"random_seed": seed}
    else:
        layers = load_checkpoint_layers(checkpoint)
        source = {"path": checkpoint, "sha256": _sha256(checkpoint)}

    write_nbbw(output, layers)

    manifest = {
        "source": source,
        "normalization_tag": NORMALIZATION_TAG,
        "layers": [
            {"name": name, "out": w.shape[0], "in": w.shape[1],
             "kh": w.shape[2], "kw": w.shape[3]}
            for name, w, _ in layers
        ],
        "output_sha256": _sha256(output),
    }
    manifest_path = output + ".manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nbbw-convert",
        description="Convert a pretrained VGG-19 checkpoint to the NBBW format")
    parser.add_argument("checkpoint", help="source checkpoint (ignored with --random)")
    parser.add_argument("output", help="output .nbbw path")
    parser.add_argument("--random", action="store_true",
                        help="emit seeded random weights instead of converting")
    parser.add_argument("--seed", type=int, default=0, help="seed for --random")
    args = parser.parse_args(argv)

    try:
        manifest = convert(args.checkpoint, args.output, args.random, args.seed)
    except (CheckpointSchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output} (sha256 {manifest['output_sha256'][:16]}...)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
