"""Coarse-to-fine mutual-nearest-neighbor correspondence search.

Starting from the full domains of the coarsest feature maps, mutual nearest
neighbors under an appearance-neutralized patch similarity are found inside
corresponding regions, filtered by normalized activation strength, and
percolated to the next finer level through receptive-field windows, down to
pixel resolution.

Coordinates are (x, y) integer pairs in the grid of their pyramid level;
ties are always broken by smallest row-major linear index (y * width + x),
which keeps results deterministic and symmetric under image swap.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backbone import FeaturePyramid

Coord = tuple[int, int]


@dataclass(frozen=True)
class Region:
    """Inclusive rectangular sub-domain of one pyramid level's grid."""

    level: int
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise ValueError(f"degenerate region bounds {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


@dataclass(frozen=True)
class RegionPair:
    p_region: Region
    q_region: Region

    def __post_init__(self):
        if self.p_region.level != self.q_region.level:
            raise ValueError("paired regions must share a pyramid level")


@dataclass
class NbbConfig:
    gamma: float = 0.05
    # Similarity neighborhood per level: 5x5 for the shallow levels, 3x3 for
    # the two deepest.
    neighborhoods: dict[int, int] = field(default_factory=lambda: {1: 5, 2: 5, 3: 5, 4: 3, 5: 3})
    # Receptive-field radius used when propagating from level l to l-1.
    radii: dict[int, int] = field(default_factory=lambda: {2: 4, 3: 4, 4: 6, 5: 6})
    levels: int = 5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if any(n % 2 == 0 for n in self.neighborhoods.values()):
            raise ValueError("neighborhood sizes must be odd")


@dataclass
class Buddy:
    """A matched neuron pair with its full coarse-to-fine ancestry.

    Chains run from level 5 down to level 1; ``rank`` is the sum of both
    chains' normalized activations, so it lies in [0, 10].
    """

    chain_a: list[Coord]
    chain_b: list[Coord]
    activations_a: list[float]
    activations_b: list[float]
    pixel_a: Coord
    pixel_b: Coord
    rank: float


def common_appearance(f_a: np.ndarray, f_b: np.ndarray,
                      p_region: Region, q_region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Transfer both regions to their average per-channel statistics.

    Returns region-sized maps C_A, C_B where each channel has been affinely
    renormalized from its own spatial mean/std to the midpoint statistics
    ((mu_A + mu_B) / 2, (sigma_A + sigma_B) / 2).  Channels with zero spatial
    variance contribute their midpoint mean only.
    """
    if f_a.shape[0] != f_b.shape[0]:
        raise ValueError("feature maps must have equal channel counts")
    for region, fmap in ((p_region, f_a), (q_region, f_b)):
        if region.y1 >= fmap.shape[1] or region.x1 >= fmap.shape[2]:
            raise ValueError(f"region {region} exceeds map shape {fmap.shape}")

    a = f_a[:, p_region.y0:p_region.y1 + 1, p_region.x0:p_region.x1 + 1]
    b = f_b[:, q_region.y0:q_region.y1 + 1, q_region.x0:q_region.x1 + 1]

    mu_a = a.mean(axis=(1, 2))[:, None, None]
    mu_b = b.mean(axis=(1, 2))[:, None, None]
    sd_a = a.std(axis=(1, 2))[:, None, None]
    sd_b = b.std(axis=(1, 2))[:, None, None]
    mu_m = (mu_a + mu_b) / 2
    sd_m = (sd_a + sd_b) / 2

    norm_a = np.divide(a - mu_a, sd_a, out=np.zeros_like(a), where=sd_a > 0)
    norm_b = np.divide(b - mu_b, sd_b, out=np.zeros_like(b), where=sd_b > 0)
    return norm_a * sd_m + mu_m, norm_b * sd_m + mu_m


def _unit_vectors(c: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(c.astype(np.float32) ** 2, axis=0, keepdims=True))
    return np.divide(c, norms, out=np.zeros_like(c, dtype=np.float32), where=norms > 0)


def _patch_matrix(c: np.ndarray, nbhd: int) -> np.ndarray:
    """Stack each location's nbhd x nbhd window of unit channel vectors.

    Offsets outside the map contribute zero vectors, so a dot product of two
    stacks sums exactly over the offsets valid in both maps (the clamped
    window rule): any term with one side missing vanishes.
    """
    ch, h, w = c.shape
    pad = nbhd // 2
    u = np.pad(_unit_vectors(c), ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(u, (nbhd, nbhd), axis=(1, 2))
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, ch * nbhd * nbhd)


def patch_similarity(c_a: np.ndarray, c_b: np.ndarray, p: Coord, q: Coord, nbhd: int) -> float:
    """Aligned cross-correlation of unit channel vectors around p and q.

    Sums <C_A(p + d) / |.|, C_B(q + d) / |.|> over offsets d in the window;
    offsets leaving either map are skipped on both sides, and zero channel
    vectors contribute nothing.
    """
    if nbhd % 2 == 0:
        raise ValueError("neighborhood size must be odd")
    for (x, y), cmap in ((p, c_a), (q, c_b)):
        if not (0 <= x < cmap.shape[2] and 0 <= y < cmap.shape[1]):
            raise ValueError(f"coordinate ({x}, {y}) outside map of shape {cmap.shape}")

    ua = _unit_vectors(c_a)
    ub = _unit_vectors(c_b)
    half = nbhd // 2
    total = 0.0
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            ax, ay = p[0] + dx, p[1] + dy
            bx, by = q[0] + dx, q[1] + dy
            if not (0 <= ax < c_a.shape[2] and 0 <= ay < c_a.shape[1]):
                continue
            if not (0 <= bx < c_b.shape[2] and 0 <= by < c_b.shape[1]):
                continue
            total += float(np.dot(ua[:, ay, ax], ub[:, by, bx]))
    return total


def find_nbbs(c_a: np.ndarray, c_b: np.ndarray, pair: RegionPair, nbhd: int) -> list[tuple[Coord, Coord]]:
    """Mutual nearest neighbors between two region-sized appearance maps.

    ``c_a`` and ``c_b`` cover ``pair.p_region`` and ``pair.q_region``; returned
    coordinates are in the level grid, ordered by p's row-major index.
    """
    p_reg, q_reg = pair.p_region, pair.q_region
    if c_a.shape[1:] != (p_reg.height, p_reg.width) or c_b.shape[1:] != (q_reg.height, q_reg.width):
        raise ValueError("appearance maps must match their region dimensions")

    sim = _patch_matrix(c_a, nbhd) @ _patch_matrix(c_b, nbhd).T
    # argmax returns the first maximum, i.e. the smallest row-major index.
    nn_ab = np.argmax(sim, axis=1)
    nn_ba = np.argmax(sim, axis=0)

    out = []
    for i in range(sim.shape[0]):
        j = int(nn_ab[i])
        if nn_ba[j] == i:
            p = (p_reg.x0 + i % p_reg.width, p_reg.y0 + i // p_reg.width)
            q = (q_reg.x0 + j % q_reg.width, q_reg.y0 + j // q_reg.width)
            out.append((p, q))
    return out


def filter_by_activation(cands: list[tuple[Coord, Coord]], h_a: np.ndarray, h_b: np.ndarray,
                         gamma: float) -> list[tuple[Coord, Coord]]:
    """Keep pairs whose endpoints are both strictly above the threshold."""
    return [(p, q) for p, q in cands
            if h_a[p[1], p[0]] > gamma and h_b[q[1], q[0]] > gamma]


def _window(p: Coord, level: int, r: int, dims: tuple[int, int]) -> Region:
    h, w = dims
    half = r // 2
    return Region(level,
                  x0=max(0, 2 * p[0] - half), y0=max(0, 2 * p[1] - half),
                  x1=min(w - 1, 2 * p[0] + half), y1=min(h - 1, 2 * p[1] + half))


def propagate_regions(pairs: list[tuple[Coord, Coord]], level: int, r: int,
                      next_dims: tuple[int, int]) -> list[RegionPair]:
    """Receptive-field search windows at the next finer level.

    Each coordinate doubles and grows by half the receptive radius on each
    side, clamped to the finer grid; exact duplicate window pairs are dropped,
    first occurrence kept.
    """
    if level < 2:
        raise ValueError("no finer level exists below level 1")
    windows = [RegionPair(_window(p, level - 1, r, next_dims), _window(q, level - 1, r, next_dims))
               for p, q in pairs]
    return list(dict.fromkeys(windows))


def _slice_region(f: np.ndarray, region: Region) -> np.ndarray:
    return f[:, region.y0:region.y1 + 1, region.x0:region.x1 + 1]


def _search_level(f_a, f_b, task, nbhd, top_level):
    pair, chain = task
    if top_level:
        c_a = _slice_region(f_a, pair.p_region)
        c_b = _slice_region(f_b, pair.q_region)
    else:
        c_a, c_b = common_appearance(f_a, f_b, pair.p_region, pair.q_region)
    return find_nbbs(c_a, c_b, pair, nbhd), chain


def run_nbb(pyr_a: FeaturePyramid, pyr_b: FeaturePyramid, cfg: NbbConfig | None = None,
            threads: int = 1) -> list[Buddy]:
    """Full coarse-to-fine search over two feature pyramids.

    At the top level the corresponding regions are the entire domains and the
    raw features serve as the common appearance; below that, appearance is
    renormalized per region pair.  Survivors of the level-1 activation filter
    become buddies carrying their five-level ancestry and accumulated rank,
    sorted by descending rank (ties by level-1 row-major index of the A-side).
    """
    if cfg is None:
        cfg = NbbConfig()
    if pyr_a.input_size != pyr_b.input_size:
        raise ValueError(f"pyramids built from different input sizes: "
                         f"{pyr_a.input_size} vs {pyr_b.input_size}")

    top = cfg.levels
    h5, w5 = pyr_a.features[top - 1].shape[1:]
    full = RegionPair(Region(top, 0, 0, w5 - 1, h5 - 1), Region(top, 0, 0, w5 - 1, h5 - 1))
    tasks: list[tuple[RegionPair, list]] = [(full, [])]

    survivors: list[tuple[Coord, Coord, list]] = []
    for level in range(top, 0, -1):
        f_a = pyr_a.features[level - 1]
        f_b = pyr_b.features[level - 1]
        h_a = pyr_a.activations[level - 1]
        h_b = pyr_b.activations[level - 1]
        nbhd = cfg.neighborhoods[level]

        if threads > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(
                    lambda t: _search_level(f_a, f_b, t, nbhd, level == top), tasks))
        else:
            results = [_search_level(f_a, f_b, t, nbhd, level == top) for t in tasks]

        # Merge in region order; a pair found in several overlapping regions
        # keeps its first discovery's ancestry.
        merged: list[tuple[Coord, Coord, list]] = []
        seen: set[tuple[Coord, Coord]] = set()
        for cands, chain in results:
            for p, q in cands:
                if (p, q) not in seen:
                    seen.add((p, q))
                    merged.append((p, q, chain))

        kept = set(filter_by_activation([(p, q) for p, q, _ in merged], h_a, h_b, cfg.gamma))
        survivors = [(p, q, chain + [(p, q, float(h_a[p[1], p[0]]), float(h_b[q[1], q[0]]))])
                     for p, q, chain in merged if (p, q) in kept]

        if level > 1:
            next_dims = pyr_a.features[level - 2].shape[1:]
            r = cfg.radii[level]
            tasks = []
            seen_regions: set[RegionPair] = set()
            for p, q, chain in survivors:
                (win,) = propagate_regions([(p, q)], level, r, next_dims)
                if win not in seen_regions:
                    seen_regions.add(win)
                    tasks.append((win, chain))

    oh, ow = pyr_a.original_size
    ih, iw = pyr_a.input_size
    obh, obw = pyr_b.original_size

    def to_pixels(p: Coord, oh_, ow_) -> Coord:
        x = min(ow_ - 1, max(0, round(p[0] * ow_ / iw)))
        y = min(oh_ - 1, max(0, round(p[1] * oh_ / ih)))
        return (int(x), int(y))

    buddies = []
    for p, q, chain in survivors:
        chain_a = [entry[0] for entry in chain]
        chain_b = [entry[1] for entry in chain]
        acts_a = [entry[2] for entry in chain]
        acts_b = [entry[3] for entry in chain]
        buddies.append(Buddy(
            chain_a=chain_a, chain_b=chain_b,
            activations_a=acts_a, activations_b=acts_b,
            pixel_a=to_pixels(p, oh, ow), pixel_b=to_pixels(q, obh, obw),
            rank=float(sum(acts_a) + sum(acts_b)),
        ))

    buddies.sort(key=lambda b: (-b.rank, b.chain_a[-1][1] * iw + b.chain_a[-1][0]))
    return buddies
