"""Grid-seeded local k-means superpixels with enforced 4-connectivity.

Pixels cluster in a joint space of scaled coordinates and intensities
(spatial scale = compactness / grid step), seeded on a regular grid. After
the k-means iterations, a connectivity pass repeatedly merges every fragment
that is not its cluster's largest component into the largest adjacent
component, so each final superpixel is one 4-connected region and the count
never exceeds the request.

Partitions depend only on the image and parameters; they are computed once
per image and reused across rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import write_pnm

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass
class SuperpixelPartition:
    labels: np.ndarray  # H x W int32 ids in [0, count)
    count: int
    seed: int = 0

    @property
    def shape(self):
        return self.labels.shape

    def pixels_of(self, superpixel_id: int) -> np.ndarray:
        return np.argwhere(self.labels == superpixel_id)

    def boundary_pixels(self, superpixel_id: int) -> list[tuple[int, int]]:
        """Pixels of the superpixel with at least one 4-neighbor outside it."""
        mask = self.labels == superpixel_id
        eroded = ndimage.binary_erosion(mask, structure=FOUR_CONNECTED,
                                        border_value=0)
        return [tuple(int(v) for v in rc) for rc in np.argwhere(mask & ~eroded)]


def _seed_grid(h: int, w: int, target: int) -> tuple[np.ndarray, float]:
    step = np.sqrt(h * w / target)
    nr = max(1, int(round(h / step)))
    nc = max(1, int(round(w / step)))
    while nr * nc > target:
        if nr >= nc and nr > 1:
            nr -= 1
        elif nc > 1:
            nc -= 1
        else:
            break
    rows = (np.arange(nr) + 0.5) * h / nr
    cols = (np.arange(nc) + 0.5) * w / nc
    centers = np.array([(r, c) for r in rows for c in cols])
    return centers, step


def _components(assign: np.ndarray):
    """4-connected components of equal-id regions; returns (component map,
    count, cluster id per component)."""
    comp = np.full(assign.shape, -1, dtype=np.int64)
    cluster_of = []
    n_total = 0
    for cl in np.unique(assign):
        lab, n = ndimage.label(assign == cl, structure=FOUR_CONNECTED)
        m = lab > 0
        comp[m] = lab[m] - 1 + n_total
        cluster_of.extend([int(cl)] * n)
        n_total += n
    return comp, n_total, np.array(cluster_of, dtype=np.int64)


def _neighbor_components(comp: np.ndarray, cid: int) -> np.ndarray:
    mask = comp == cid
    neighbors = set()
    h, w = comp.shape
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted = np.zeros_like(mask)
        if dr == 1:
            shifted[1:, :] = mask[:-1, :]
        elif dr == -1:
            shifted[:-1, :] = mask[1:, :]
        elif dc == 1:
            shifted[:, 1:] = mask[:, :-1]
        else:
            shifted[:, :-1] = mask[:, 1:]
        touched = comp[shifted & ~mask]
        neighbors.update(int(x) for x in np.unique(touched))
    neighbors.discard(cid)
    return np.array(sorted(neighbors), dtype=np.int64)


def _enforce_connectivity(assign: np.ndarray) -> np.ndarray:
    """Merge non-primary fragments into their largest adjacent component.

    One merge per pass keeps the process well-defined; each merge reduces the
    component count, so it terminates.
    """
    while True:
        comp, n_comp, cluster_of = _components(assign)
        sizes = np.bincount(comp.ravel(), minlength=n_comp)
        primary: dict[int, int] = {}
        for cid in range(n_comp):
            cl = cluster_of[cid]
            if cl not in primary or sizes[cid] > sizes[primary[cl]]:
                primary[int(cl)] = cid
        orphan = next(
            (cid for cid in range(n_comp) if primary[int(cluster_of[cid])] != cid),
            None,
        )
        if orphan is None:
            return assign
        neigh = _neighbor_components(comp, orphan)
        best = max(neigh, key=lambda nid: (sizes[nid], -nid))
        assign[comp == orphan] = cluster_of[best]


def _relabel_dense(assign: np.ndarray) -> tuple[np.ndarray, int]:
    ids, first = np.unique(assign, return_index=True)
    order = ids[np.argsort(first)]  # first appearance in row-major scan
    mapping = np.empty(int(assign.max()) + 1, dtype=np.int32)
    for new, old in enumerate(order):
        mapping[old] = new
    return mapping[assign], len(order)


def segment(image: np.ndarray, target_count: int, compactness: float = 10.0,
            iterations: int = 10, seed: int = 0) -> SuperpixelPartition:
    """Partition an image into at most `target_count` connected superpixels."""
    if image.ndim == 2:
        image = image[:, :, None]
    h, w, c = image.shape
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    if target_count > h * w:
        raise ValueError(f"cannot make {target_count} superpixels of {h * w} pixels")

    centers_yx, step = _seed_grid(h, w, target_count)
    k = len(centers_yx)
    yy, xx = np.mgrid[0:h, 0:w]
    py = yy + 0.5  # pixel centers
    px = xx + 0.5
    sscale = compactness / step

    feat_centers = np.empty((k, c))
    for i, (cy, cx) in enumerate(centers_yx):
        feat_centers[i] = image[min(h - 1, int(cy)), min(w - 1, int(cx)), :]
    pos_centers = centers_yx.copy()

    assign = np.zeros((h, w), dtype=np.int64)
    for _ in range(max(1, iterations)):
        best = np.full((h, w), np.inf)
        assign.fill(-1)
        for i in range(k):
            cy, cx = pos_centers[i]
            r0 = max(0, int(cy - 2 * step))
            r1 = min(h, int(np.ceil(cy + 2 * step)) + 1)
            c0 = max(0, int(cx - 2 * step))
            c1 = min(w, int(np.ceil(cx + 2 * step)) + 1)
            if r0 >= r1 or c0 >= c1:
                continue
            d = ((py[r0:r1, c0:c1] - cy) ** 2 + (px[r0:r1, c0:c1] - cx) ** 2)
            d = d * sscale ** 2
            d = d + ((image[r0:r1, c0:c1, :] - feat_centers[i]) ** 2).sum(-1)
            window_best = best[r0:r1, c0:c1]
            improved = d < window_best
            window_best[improved] = d[improved]
            assign[r0:r1, c0:c1][improved] = i

        stray = assign < 0
        if stray.any():
            # pixels outside every search window: brute-force assignment
            sy, sx = np.nonzero(stray)
            d = ((py[sy, sx][:, None] - pos_centers[:, 0]) ** 2
                 + (px[sy, sx][:, None] - pos_centers[:, 1]) ** 2) * sscale ** 2
            d += ((image[sy, sx, :][:, None, :] - feat_centers) ** 2).sum(-1)
            assign[sy, sx] = np.argmin(d, axis=1)

        for i in range(k):
            m = assign == i
            if m.any():
                pos_centers[i] = (py[m].mean(), px[m].mean())
                feat_centers[i] = image[m].mean(axis=0)

    assign = _enforce_connectivity(assign)
    labels, count = _relabel_dense(assign)
    return SuperpixelPartition(labels.astype(np.int32), count, seed)


def propagate(point: tuple[int, int, int],
              partition: SuperpixelPartition) -> list[tuple[int, int, int, tuple[int, int]]]:
    """Copy an annotated point's class onto its whole superpixel.

    Returns (row, col, class, source_point) for every member pixel,
    including the annotated pixel itself, in row-major order.
    """
    row, col, cls = point
    h, w = partition.shape
    if not (0 <= row < h and 0 <= col < w):
        raise ValueError(f"point ({row},{col}) outside {h}x{w} partition")
    sp = partition.labels[row, col]
    return [(int(r), int(c), int(cls), (row, col))
            for r, c in np.argwhere(partition.labels == sp)]


def dump_partition_pgm(partition: SuperpixelPartition, path):
    write_pnm(path, partition.labels.astype(np.uint32), 65535)
