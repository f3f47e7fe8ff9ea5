"""Moving-least-squares affine deformation.

Used both to warp image pairs into a shared midpoint frame and to densify a
sparse set of correspondences into a smooth mapping for keypoint transfer.
Follows the affine variant of Schaefer-style MLS: per query point, a weighted
least-squares affine transform with weights 1 / |v - alpha_i|^(2 * exponent).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_DEGENERATE_EPS = 1e-12


@dataclass
class ControlSet:
    """Matched source/target point pairs driving the deformation."""

    sources: np.ndarray
    targets: np.ndarray
    alpha_exponent: float = 1.0

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if len(self.sources) == 0:
            raise ValueError("control set must contain at least one pair")
        if self.sources.shape != self.targets.shape or self.sources.shape[1] != 2:
            raise ValueError(f"sources {self.sources.shape} and targets {self.targets.shape} "
                             "must be matching (n, 2) arrays")
        uniq = {tuple(p) for p in self.sources}
        if len(uniq) != len(self.sources):
            raise ValueError("control sources must be pairwise distinct")


def mls_apply(points: np.ndarray, controls: ControlSet) -> np.ndarray:
    """Map an (m, 2) array of query points through the MLS deformation.

    Queries coinciding with a control source return the paired target exactly.
    A rank-deficient weighted covariance (single control, collinear controls)
    degrades to the weighted-centroid translation.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = controls.sources
    b = controls.targets

    diff = points[:, None, :] - a[None, :, :]          # (m, n, 2)
    d2 = np.sum(diff ** 2, axis=2)                     # (m, n)
    exact = d2 == 0.0

    with np.errstate(divide="ignore"):
        w = 1.0 / np.power(d2, controls.alpha_exponent)
    w[exact.any(axis=1)] = 0.0                         # overwritten below anyway

    wsum = w.sum(axis=1, keepdims=True)
    wsum[wsum == 0] = 1.0
    p_star = (w @ a) / wsum                            # (m, 2)
    q_star = (w @ b) / wsum
    p_hat = a[None, :, :] - p_star[:, None, :]         # (m, n, 2)
    q_hat = b[None, :, :] - q_star[:, None, :]

    cov = np.einsum("mn,mni,mnj->mij", w, p_hat, p_hat)
    cross = np.einsum("mn,mni,mnj->mij", w, p_hat, q_hat)

    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
    trace = cov[:, 0, 0] + cov[:, 1, 1]
    degenerate = np.abs(det) <= _DEGENERATE_EPS * np.maximum(trace * trace, 1.0)

    safe_det = np.where(degenerate, 1.0, det)
    inv = np.empty_like(cov)
    inv[:, 0, 0] = cov[:, 1, 1] / safe_det
    inv[:, 1, 1] = cov[:, 0, 0] / safe_det
    inv[:, 0, 1] = -cov[:, 0, 1] / safe_det
    inv[:, 1, 0] = -cov[:, 1, 0] / safe_det

    affine = np.einsum("mi,mij,mjk->mk", points - p_star, inv, cross) + q_star
    translated = points - p_star + q_star
    out = np.where(degenerate[:, None], translated, affine)

    hit_rows, hit_cols = np.nonzero(exact)
    out[hit_rows] = b[hit_cols]
    return out


def mls_map(point, controls: ControlSet) -> tuple[float, float]:
    """Deform a single 2-D point."""
    x, y = mls_apply(np.asarray(point, dtype=np.float64)[None, :], controls)[0]
    return float(x), float(y)


def midpoints(matches) -> np.ndarray:
    """Elementwise means 0.5 * (alpha_i + beta_i) of matched point pairs."""
    matches = list(matches)
    if not matches:
        raise ValueError("need at least one match")
    alphas = np.asarray([m[0] for m in matches], dtype=np.float64)
    betas = np.asarray([m[1] for m in matches], dtype=np.float64)
    return 0.5 * (alphas + betas)


def warp_image(image: np.ndarray, controls: ControlSet) -> np.ndarray:
    """Warp an (H, W, 3) image so control sources land on control targets.

    Inverse mapping: each output pixel is pulled from the input at the
    position given by the MLS map built on swapped controls, sampled
    bilinearly; samples outside the input are black.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    h, w = image.shape[:2]

    inverse = ControlSet(controls.targets.copy(), controls.sources.copy(),
                         controls.alpha_exponent)
    ys, xs = np.mgrid[0:h, 0:w]
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    src = mls_apply(grid, inverse)

    sx, sy = src[:, 0], src[:, 1]
    # Small slack so border pixels are not lost to rounding noise in the map.
    eps = 1e-6
    valid = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[:, None]
    fy = (sy - y0)[:, None]

    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    sampled = top * (1 - fy) + bot * fy
    sampled[~valid] = 0.0

    out = sampled.reshape(h, w, 3)
    if np.issubdtype(image.dtype, np.integer):
        out = np.clip(np.rint(out), 0, 255).astype(image.dtype)
    return out


def align_pair(img_a: np.ndarray, img_b: np.ndarray, buddies) -> tuple[np.ndarray, np.ndarray]:
    """Warp both images so every matched pair meets at its midpoint."""
    buddies = list(buddies)
    if not buddies:
        raise ValueError("need at least one buddy to align")
    pairs = [(b.pixel_a, b.pixel_b) for b in buddies]
    etas = midpoints(pairs)

    def controls_for(pixels, targets):
        # Exact duplicate source pixels (possible when several buddies share
        # an endpoint) would make the weighted fit ill-posed; keep the first.
        seen, src, dst = set(), [], []
        for p, t in zip(pixels, targets):
            key = (float(p[0]), float(p[1]))
            if key not in seen:
                seen.add(key)
                src.append(p)
                dst.append(t)
        return ControlSet(np.asarray(src, dtype=np.float64), np.asarray(dst, dtype=np.float64))

    warped_a = warp_image(img_a, controls_for([b.pixel_a for b in buddies], etas))
    warped_b = warp_image(img_b, controls_for([b.pixel_b for b in buddies], etas))
    return warped_a, warped_b
