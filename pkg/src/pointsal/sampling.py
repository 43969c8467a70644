"""Diversity-aware point selection from an uncertainty map.

Selection runs in three stages: keep the top K% highest-uncertainty pixels
as candidates, greedily grow a spatial cover of the candidates (each added
point maximizes its summed distance to the points already picked), then keep
the k cover points least similar to the already-labeled points under mean
cosine similarity of small appearance descriptors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .uncertainty import UncertaintyMap

log = logging.getLogger(__name__)


@dataclass
class CandidatePoint:
    row: int
    col: int
    score: float
    coord_norm: tuple[float, float]
    pixel_index: int
    descriptor: np.ndarray | None = None


@dataclass
class CoverSet:
    """Greedy cover selection order plus the pairwise-distance objective after
    each addition."""

    points: list[CandidatePoint]
    objective_trace: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.points)


def candidate_set(umap: UncertaintyMap, k_percent: float,
                  per_image_cap: int = 512) -> list[CandidatePoint]:
    """Top ceil(K% of H*W) positive-score pixels, ties broken row-major.

    Zero-score pixels never become candidates; an all-zero map yields an
    empty list (the caller decides on a fallback).
    """
    if not (0 < k_percent <= 100):
        raise ValueError(f"k_percent must be in (0,100], got {k_percent}")
    h, w = umap.shape
    flat = umap.scores.ravel()
    positive = np.flatnonzero(flat > 0)
    if positive.size == 0:
        return []
    target = math.ceil(k_percent / 100.0 * h * w)
    take = min(target, per_image_cap, positive.size)
    order = positive[np.lexsort((positive, -flat[positive]))][:take]
    return [
        CandidatePoint(
            row=int(ix // w), col=int(ix % w), score=float(flat[ix]),
            coord_norm=(float(ix // w) / h, float(ix % w) / w),
            pixel_index=int(ix),
        )
        for ix in order
    ]


def point_descriptor(row: int, col: int, image: np.ndarray,
                     prob: np.ndarray) -> np.ndarray:
    """Position, local mean appearance, ensemble probability, and a constant
    component (which keeps every descriptor's norm positive)."""
    h, w = prob.shape
    r0, r1 = max(0, row - 1), min(h, row + 2)
    c0, c1 = max(0, col - 1), min(w, col + 2)
    patch_means = image[r0:r1, c0:c1, :].mean(axis=(0, 1))
    return np.concatenate([
        [row / h, col / w], patch_means, [float(prob[row, col]), 1.0]
    ])


def attach_descriptors(points: list[CandidatePoint], image: np.ndarray,
                       prob: np.ndarray):
    for p in points:
        p.descriptor = point_descriptor(p.row, p.col, image, prob)
    return points


def greedy_cover(candidates: list[CandidatePoint], m: int,
                 seed_index: int = 0) -> CoverSet:
    """Grow a cover from the seed point; each step adds the candidate with the
    largest summed Euclidean distance (over normalized coordinates) to the
    current cover, ties broken by lowest row-major pixel index."""
    if not candidates:
        raise ValueError("greedy_cover needs a nonempty candidate set")
    if m < 1:
        raise ValueError(f"cover size must be >= 1, got {m}")
    if not (0 <= seed_index < len(candidates)):
        raise ValueError(f"seed_index {seed_index} out of range")

    coords = np.array([p.coord_norm for p in candidates])
    pix = np.array([p.pixel_index for p in candidates])
    n = len(candidates)
    dist = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))

    selected = [seed_index]
    in_cover = np.zeros(n, dtype=bool)
    in_cover[seed_index] = True
    sum_dist = dist[:, seed_index].copy()
    objective = 0.0
    trace = [objective]

    while len(selected) < min(m, n):
        avail = ~in_cover
        best_sum = sum_dist[avail].max()
        tied = np.flatnonzero(avail & (sum_dist == best_sum))
        choice = int(tied[np.argmin(pix[tied])])
        objective += float(sum_dist[choice])
        trace.append(objective)
        selected.append(choice)
        in_cover[choice] = True
        sum_dist += dist[:, choice]

    return CoverSet([candidates[i] for i in selected], trace)


def similarity_phi(candidate: CandidatePoint,
                   labeled_descriptors: list[np.ndarray]) -> float:
    """Mean cosine similarity to the labeled descriptors; 0 when none exist."""
    if not labeled_descriptors:
        return 0.0
    d = candidate.descriptor
    dn = np.linalg.norm(d)
    total = 0.0
    for other in labeled_descriptors:
        total += float(d @ other) / (dn * np.linalg.norm(other))
    return total / len(labeled_descriptors)


def select_batch(cover: CoverSet, labeled_descriptors: list[np.ndarray],
                 k: int) -> list[CandidatePoint]:
    """The k cover points with the lowest mean similarity to the labeled set,
    ties resolved by cover selection order."""
    if k > len(cover):
        log.warning("requested %d points from a cover of %d; returning all",
                    k, len(cover))
        return list(cover.points)
    phis = [similarity_phi(p, labeled_descriptors) for p in cover.points]
    order = sorted(range(len(cover)), key=lambda i: (phis[i], i))
    return [cover.points[i] for i in order[:k]]
