"""Sparse cross-domain correspondences via mutual nearest neighbors in a
pretrained-CNN feature pyramid, with MLS alignment and PCK evaluation."""

from .backbone import (BackboneWeights, FeaturePyramid, extract_pyramid,
                       load_weights, normalize_activations, preprocess)
from .engine import (Buddy, NbbConfig, Region, RegionPair, common_appearance,
                     filter_by_activation, find_nbbs, patch_similarity,
                     propagate_regions, run_nbb)
from .mls import ControlSet, align_pair, midpoints, mls_map, warp_image
from .selection import SelectionConfig, compute_rank, select_top_k
from .tensor import ConvLayer, bilinear_resize, conv2d, maxpool2, relu

__all__ = [
    "BackboneWeights", "FeaturePyramid", "extract_pyramid", "load_weights",
    "normalize_activations", "preprocess",
    "Buddy", "NbbConfig", "Region", "RegionPair", "common_appearance",
    "filter_by_activation", "find_nbbs", "patch_similarity",
    "propagate_regions", "run_nbb",
    "ControlSet", "align_pair", "midpoints", "mls_map", "warp_image",
    "SelectionConfig", "compute_rank", "select_top_k",
    "ConvLayer", "bilinear_resize", "conv2d", "maxpool2", "relu",
]
