"""Rank accumulation and spatially scattered top-k selection.

A buddy's rank is the sum of the normalized activations along both ancestry
chains.  To pick k strong but well-distributed pairs, all buddies are
partitioned into k spatial clusters (k-means over both endpoints' normalized
pixel coordinates) and each nonempty cluster contributes its highest-rank
member.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Buddy


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    seed: int = 0
    max_iters: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")


def compute_rank(buddy: Buddy) -> float:
    """Sum of both chains' activations; stores the result on the buddy."""
    levels = 5
    if (len(buddy.chain_a) != levels or len(buddy.chain_b) != levels
            or len(buddy.activations_a) != levels or len(buddy.activations_b) != levels):
        raise ValueError("buddy must carry complete 5-level chains")
    rank = float(sum(buddy.activations_a) + sum(buddy.activations_b))
    buddy.rank = rank
    return rank


def kmeans(points: np.ndarray, k: int, seed: int, max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns cluster labels.

    Fully deterministic for a fixed seed.  Empty clusters keep their previous
    centroid and simply attract no points.
    """
    n = len(points)
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            centers[j] = points[rng.integers(n)]
        else:
            centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))

    labels = None
    for _ in range(max_iters):
        dists = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return labels


def select_top_k(buddies: list[Buddy], cfg: SelectionConfig,
                 size_a: tuple[int, int], size_b: tuple[int, int]) -> list[Buddy]:
    """Highest-rank representative of each of k spatial clusters.

    ``size_a`` and ``size_b`` are (height, width) of the original images and
    normalize the 4-D clustering coordinates (x_a/W, y_a/H, x_b/W, y_b/H).
    With at most k buddies, everything is returned rank-sorted.
    """
    def order_key(b: Buddy):
        return (-b.rank, b.pixel_a[1] * size_a[1] + b.pixel_a[0])

    if len(buddies) <= cfg.k:
        return sorted(buddies, key=order_key)

    ha, wa = size_a
    hb, wb = size_b
    points = np.array([[b.pixel_a[0] / wa, b.pixel_a[1] / ha,
                        b.pixel_b[0] / wb, b.pixel_b[1] / hb] for b in buddies])
    labels = kmeans(points, cfg.k, cfg.seed, cfg.max_iters)

    selected = []
    for j in range(cfg.k):
        members = [b for b, lab in zip(buddies, labels) if lab == j]
        if members:
            selected.append(min(members, key=order_key))
    return sorted(selected, key=order_key)
