"""JSON documents exchanged by the CLI: match results and keypoint annotations."""
from __future__ import annotations

import json
import math

from .engine import Buddy

MATCH_VERSION = 1


def build_match_document(path_a: str, path_b: str,
                         size_a: tuple[int, int], size_b: tuple[int, int],
                         gamma: float, k: int, seed: int, side: int,
                         buddies: list[Buddy]) -> dict:
    """Assemble the match document; sizes are (height, width)."""
    return {
        "version": MATCH_VERSION,
        "image_a": {"path": path_a, "size": [size_a[1], size_a[0]]},
        "image_b": {"path": path_b, "size": [size_b[1], size_b[0]]},
        "config": {"gamma": gamma, "k": k, "seed": seed, "side": side},
        "buddies": [
            {
                "pixel_a": list(b.pixel_a),
                "pixel_b": list(b.pixel_b),
                "rank": b.rank,
                "chain_a": [list(c) for c in b.chain_a],
                "chain_b": [list(c) for c in b.chain_b],
            }
            for b in buddies
        ],
    }


def dumps_document(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def parse_match_document(text: str) -> dict:
    doc = json.loads(text)
    if doc.get("version") != MATCH_VERSION:
        raise ValueError(f"unsupported match document version {doc.get('version')!r}")
    for key in ("image_a", "image_b", "config", "buddies"):
        if key not in doc:
            raise ValueError(f"match document missing {key!r}")
    for rec in doc["buddies"]:
        for key in ("pixel_a", "pixel_b", "rank", "chain_a", "chain_b"):
            if key not in rec:
                raise ValueError(f"buddy record missing {key!r}")
    return doc


def parse_annotation_document(text: str) -> dict:
    """Ground-truth keypoint pairs plus both image sizes ([w, h])."""
    doc = json.loads(text)
    for key in ("size_a", "size_b", "pairs"):
        if key not in doc:
            raise ValueError(f"annotation document missing {key!r}")
    if not doc["pairs"]:
        raise ValueError("annotation document has no keypoint pairs")
    for rec in doc["pairs"]:
        if "gt_a" not in rec or "gt_b" not in rec:
            raise ValueError("annotation pair missing gt_a/gt_b")
    return doc


def evaluate_pck(match_doc: dict, ann_doc: dict, alpha: float) -> dict:
    """Keypoint-transfer accuracy of the densified correspondence field.

    The sparse matches are interpolated with MLS; a ground-truth point counts
    as correctly transferred when its prediction lands within
    alpha * max(H, W) pixels of the annotated target, measured in the target
    image.
    """
    from .mls import ControlSet, mls_map

    buddies = match_doc["buddies"]
    if not buddies:
        raise ValueError("match document contains no correspondences")
    seen, src, dst = set(), [], []
    for rec in buddies:
        key = tuple(rec["pixel_a"])
        if key not in seen:
            seen.add(key)
            src.append(rec["pixel_a"])
            dst.append(rec["pixel_b"])
    controls = ControlSet(src, dst)

    wb, hb = ann_doc["size_b"]
    threshold = alpha * max(hb, wb)

    points = []
    correct = 0
    for rec in ann_doc["pairs"]:
        pred = mls_map(rec["gt_a"], controls)
        dist = math.dist(pred, rec["gt_b"])
        hit = dist <= threshold
        correct += hit
        points.append({
            "gt_a": list(rec["gt_a"]),
            "gt_b": list(rec["gt_b"]),
            "predicted": [pred[0], pred[1]],
            "distance": dist,
            "correct": bool(hit),
        })

    total = len(points)
    return {
        "alpha": alpha,
        "threshold_px": threshold,
        "total": total,
        "correct": correct,
        "pck": correct / total,
        "points": points,
    }
