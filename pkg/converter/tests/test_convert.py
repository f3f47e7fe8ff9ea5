import json

import numpy as np
import pytest
import torch

from nbbw_converter.convert import (LAYERS, CheckpointSchemaError, convert,
                                    main, random_layers)

# The primary library is the consumer of the NBBW format; round-trip checks
# read the produced files through it.
from nbb.backbone import load_weights


@pytest.fixture(scope="module")
def fake_checkpoint(tmp_path_factory):
    """A state dict with torchvision layer numbering and the correct shapes."""
    rng = np.random.default_rng(0)
    state = {}
    for _, out_c, in_c, idx in LAYERS:
        state[f"features.{idx}.weight"] = torch.from_numpy(
            rng.standard_normal((out_c, in_c, 3, 3)).astype(np.float32))
        state[f"features.{idx}.bias"] = torch.from_numpy(
            rng.standard_normal(out_c).astype(np.float32))
    path = tmp_path_factory.mktemp("ckpt") / "vgg19.pth"
    torch.save(state, str(path))
    return str(path), state


def test_convert_produces_loadable_file(fake_checkpoint, tmp_path):
    path, _ = fake_checkpoint
    out = str(tmp_path / "out.nbbw")
    manifest = convert(path, out)
    weights = load_weights(out)
    assert len(weights.layers) == 13
    assert weights.layers[0].name == "conv1_1"
    assert weights.layers[0].weights.shape == (64, 3, 3, 3)
    assert manifest["layers"][0] == {"name": "conv1_1", "out": 64, "in": 3, "kh": 3, "kw": 3}


def test_values_roundtrip_bit_exact(fake_checkpoint, tmp_path):
    path, state = fake_checkpoint
    out = str(tmp_path / "out.nbbw")
    convert(path, out)
    weights = load_weights(out)
    for layer, (name, _, _, idx) in zip(weights.layers, LAYERS):
        assert layer.name == name
        assert (layer.weights == state[f"features.{idx}.weight"].numpy()).all()
        assert (layer.biases == state[f"features.{idx}.bias"].numpy()).all()


def test_missing_layer_names_it(fake_checkpoint, tmp_path):
    path, state = fake_checkpoint
    broken = {k: v for k, v in state.items() if not k.startswith("features.28.")}
    bpath = str(tmp_path / "broken.pth")
    torch.save(broken, bpath)
    with pytest.raises(CheckpointSchemaError) as err:
        convert(bpath, str(tmp_path / "out.nbbw"))
    assert "conv5_1" in str(err.value)


def test_wrong_shape_names_layer(fake_checkpoint, tmp_path):
    path, state = fake_checkpoint
    bad = dict(state)
    bad["features.5.weight"] = torch.zeros((128, 64, 5, 5))
    bpath = str(tmp_path / "bad.pth")
    torch.save(bad, bpath)
    with pytest.raises(CheckpointSchemaError) as err:
        convert(bpath, str(tmp_path / "out.nbbw"))
    assert "conv2_1" in str(err.value)


def test_double_conversion_byte_identical(fake_checkpoint, tmp_path):
    path, _ = fake_checkpoint
    out1 = str(tmp_path / "a.nbbw")
    out2 = str(tmp_path / "b.nbbw")
    m1 = convert(path, out1)
    m2 = convert(path, out2)
    assert open(out1, "rb").read() == open(out2, "rb").read()
    assert m1["output_sha256"] == m2["output_sha256"]


def test_random_mode(tmp_path):
    out = str(tmp_path / "rand.nbbw")
    assert main(["--random", "--seed", "7", "ignored", out]) == 0
    weights = load_weights(out)
    assert [l.weights.shape for l in weights.layers] == \
           [(o, i, 3, 3) for _, o, i, _ in LAYERS]
    # seeded generation is reproducible
    for layer, (name, w, b) in zip(weights.layers, random_layers(7)):
        assert (layer.weights == w).all() and (layer.biases == b).all()


def test_manifest_written(fake_checkpoint, tmp_path):
    path, _ = fake_checkpoint
    out = str(tmp_path / "m.nbbw")
    convert(path, out)
    manifest = json.load(open(out + ".manifest.json"))
    assert manifest["normalization_tag"] == 1
    assert manifest["source"]["path"] == path
    assert len(manifest["layers"]) == 13
