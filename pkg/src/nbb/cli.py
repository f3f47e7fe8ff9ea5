"""Command-line interface: match, align and eval-pck subcommands."""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image, ImageDraw

from . import backbone, documents, mls
from .engine import NbbConfig, run_nbb
from .selection import SelectionConfig, select_top_k

# Deterministic marker palette, indexed by rank order (RGB).
PALETTE = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 190), (0, 128, 128), (170, 110, 40),
]


def _load_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: cannot read image {path}: {exc}")


def _resolve_weights(args) -> str:
    path = args.weights or os.environ.get("NBB_WEIGHTS")
    if not path:
        raise SystemExit("error: no weight file given (use --weights or set NBB_WEIGHTS)")
    return path


def _write_text(path: str | None, text: str) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_match(image_a: str, image_b: str, weights_path: str, *,
              k: int = 10, gamma: float = 0.05, side: int = 224,
              seed: int = 0, threads: int = 1) -> dict:
    """Full pipeline: preprocess, pyramids, NBB search, top-k selection."""
    img_a = _load_image(image_a)
    img_b = _load_image(image_b)
    weights = backbone.load_weights(weights_path)

    in_a = backbone.preprocess(img_a, side)
    in_b = backbone.preprocess(img_b, side)
    size_a = img_a.shape[:2]
    size_b = img_b.shape[:2]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_a = pool.submit(backbone.extract_pyramid, in_a, weights, size_a)
            fut_b = pool.submit(backbone.extract_pyramid, in_b, weights, size_b)
            pyr_a, pyr_b = fut_a.result(), fut_b.result()
    else:
        pyr_a = backbone.extract_pyramid(in_a, weights, size_a)
        pyr_b = backbone.extract_pyramid(in_b, weights, size_b)

    buddies = run_nbb(pyr_a, pyr_b, NbbConfig(gamma=gamma), threads=threads)
    selected = select_top_k(buddies, SelectionConfig(k=k, seed=seed), size_a, size_b)

    return documents.build_match_document(
        image_a, image_b, size_a, size_b, gamma, k, seed, side, selected)


def annotate_pair(img_a: np.ndarray, img_b: np.ndarray, match_doc: dict) -> Image.Image:
    """Side-by-side view with numbered, color-matched circle markers."""
    ha, wa = img_a.shape[:2]
    hb, wb = img_b.shape[:2]
    canvas = Image.new("RGB", (wa + wb, max(ha, hb)), (0, 0, 0))
    canvas.paste(Image.fromarray(img_a), (0, 0))
    canvas.paste(Image.fromarray(img_b), (wa, 0))

    draw = ImageDraw.Draw(canvas)
    radius = max(3, max(canvas.size) // 80)
    for i, rec in enumerate(match_doc["buddies"]):
        color = PALETTE[i % len(PALETTE)]
        for (x, y), off in ((rec["pixel_a"], 0), (rec["pixel_b"], wa)):
            draw.ellipse([x + off - radius, y - radius, x + off + radius, y + radius],
                         outline=color, width=2)
            draw.text((x + off + radius + 1, y - radius), str(i + 1), fill=color)
    return canvas


def cmd_match(args) -> int:
    doc = run_match(args.image_a, args.image_b, _resolve_weights(args),
                    k=args.k, gamma=args.gamma, side=args.side,
                    seed=args.seed, threads=args.threads)
    if not doc["buddies"]:
        print("warning: no correspondences survived filtering "
              "(consider lowering --gamma)", file=sys.stderr)
    _write_text(args.out, documents.dumps_document(doc))
    if args.annotate:
        canvas = annotate_pair(_load_image(args.image_a), _load_image(args.image_b), doc)
        canvas.save(args.annotate)
    return 0


def cmd_align(args) -> int:
    if args.matches:
        with open(args.matches) as fh:
            doc = documents.parse_match_document(fh.read())
    else:
        doc = run_match(args.image_a, args.image_b, _resolve_weights(args),
                        k=args.k, gamma=args.gamma, side=args.side,
                        seed=args.seed, threads=args.threads)
    if not doc["buddies"]:
        raise SystemExit("error: empty match set; rerun with a lower --gamma")

    img_a = _load_image(args.image_a)
    img_b = _load_image(args.image_b)

    class _Pair:
        def __init__(self, rec):
            self.pixel_a = tuple(rec["pixel_a"])
            self.pixel_b = tuple(rec["pixel_b"])

    warped_a, warped_b = mls.align_pair(img_a, img_b, [_Pair(r) for r in doc["buddies"]])
    Image.fromarray(warped_a).save(args.out_a)
    Image.fromarray(warped_b).save(args.out_b)
    return 0


def cmd_eval_pck(args) -> int:
    with open(args.matches) as fh:
        match_doc = documents.parse_match_document(fh.read())
    with open(args.annotations) as fh:
        ann_doc = documents.parse_annotation_document(fh.read())
    report = documents.evaluate_pck(match_doc, ann_doc, args.alpha)
    _write_text(args.out, documents.dumps_document(report))
    return 0


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", help="NBBW weight file (falls back to $NBB_WEIGHTS)")
    p.add_argument("--k", type=int, default=10, help="number of correspondences to keep")
    p.add_argument("--gamma", type=float, default=0.05, help="activation threshold")
    p.add_argument("--side", type=int, default=224, help="canonical input side (multiple of 16)")
    p.add_argument("--seed", type=int, default=0, help="clustering seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbb",
                                     description="Sparse cross-domain image correspondences")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="find correspondences between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    _add_pipeline_flags(p)
    p.add_argument("-o", "--out", help="write the match document here (default: stdout)")
    p.add_argument("--annotate", help="write an annotated side-by-side PNG here")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("align", help="warp both images into their midpoint frame")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--matches", help="existing match document (otherwise runs match inline)")
    _add_pipeline_flags(p)
    p.add_argument("--out-a", required=True, help="output path for the warped first image")
    p.add_argument("--out-b", required=True, help="output path for the warped second image")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval-pck", help="keypoint-transfer accuracy against annotations")
    p.add_argument("--matches", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("-o", "--out", help="write the report here (default: stdout)")
    p.set_defaults(func=cmd_eval_pck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
