import math

import numpy as np
import pytest

from pointsal.sampling import (
    CandidatePoint,
    attach_descriptors,
    candidate_set,
    greedy_cover,
    point_descriptor,
    select_batch,
    similarity_phi,
)
from pointsal.seeding import rng_for
from pointsal.uncertainty import UncertaintyMap, uncertainty_map


def umap_from_scores(scores):
    scores = np.asarray(scores, dtype=np.float64)
    return UncertaintyMap(scores, np.zeros(scores.shape, dtype=np.uint8))


def make_candidate(row, col, h=10, w=10, score=1.0, descriptor=None):
    return CandidatePoint(row, col, score, (row / h, col / w), row * w + col,
                          None if descriptor is None else np.asarray(descriptor, float))


class TestCandidateSet:
    def test_all_zero_scores_empty(self):
        assert candidate_set(umap_from_scores(np.zeros((8, 8))), 3.0) == []

    def test_k100_takes_exactly_the_positive_pixels(self):
        scores = np.zeros((5, 5))
        pos = [(0, 1), (1, 1), (2, 3), (3, 0), (4, 4), (0, 0), (2, 2), (1, 4),
               (3, 3), (4, 0)]
        for i, (r, c) in enumerate(pos):
            scores[r, c] = 0.1 + 0.01 * i
        cands = candidate_set(umap_from_scores(scores), 100.0)
        assert len(cands) == 10
        assert {(p.row, p.col) for p in cands} == set(pos)

    def test_64x64_k3_count_matches_sort_oracle(self):
        rng = rng_for(0, "cand")
        scores = rng.uniform(size=(64, 64))
        cands = candidate_set(umap_from_scores(scores), 3.0, per_image_cap=4096)
        assert len(cands) == math.ceil(0.03 * 64 * 64) == 123
        # independent full-sort oracle
        flat = scores.ravel()
        oracle = sorted(range(flat.size), key=lambda ix: (-flat[ix], ix))[:123]
        assert [p.pixel_index for p in cands] == oracle

    def test_ties_break_row_major(self):
        scores = np.zeros((4, 4))
        scores[3, 3] = scores[0, 1] = scores[2, 0] = 0.7
        cands = candidate_set(umap_from_scores(scores), 100.0)
        assert [(p.row, p.col) for p in cands] == [(0, 1), (2, 0), (3, 3)]

    def test_cap_applies(self):
        scores = rng_for(1, "cand").uniform(size=(16, 16)) + 0.01
        cands = candidate_set(umap_from_scores(scores), 100.0, per_image_cap=10)
        assert len(cands) == 10


class TestGreedyCover:
    def test_m1_is_seed_only(self):
        cands = [make_candidate(0, 0), make_candidate(5, 5)]
        cover = greedy_cover(cands, 1, seed_index=0)
        assert [(p.row, p.col) for p in cover.points] == [(0, 0)]
        assert cover.objective_trace == [0.0]

    def test_collinear_picks_farthest(self):
        # x-coordinates 0, 0.5, 1.0 from seed at 0 -> picks the one at 1.0
        cands = [make_candidate(0, 0), make_candidate(0, 5), make_candidate(0, 10, w=10)]
        cover = greedy_cover(cands, 2, seed_index=0)
        assert (cover.points[1].row, cover.points[1].col) == (0, 10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            greedy_cover([], 3)

    def test_matches_independent_quadratic_oracle(self):
        # independently written reimplementation: explicit loops, no shared code
        def oracle_greedy(coords, pix, m, seed_index):
            chosen = [seed_index]
            while len(chosen) < min(m, len(coords)):
                best, best_key = None, None
                for u in range(len(coords)):
                    if u in chosen:
                        continue
                    s = 0.0
                    for v in chosen:
                        s += math.dist(coords[u], coords[v])
                    key = (-s, pix[u])
                    if best_key is None or key < best_key:
                        best, best_key = u, key
                chosen.append(best)
            return chosen

        rng = rng_for(2, "cover")
        for trial in range(20):
            n = int(rng.integers(5, 60))
            m = int(rng.integers(1, 10))
            rows = rng.integers(0, 30, size=n)
            cols = rng.integers(0, 30, size=n)
            cands = [make_candidate(int(r), int(c), h=30, w=30)
                     for r, c in zip(rows, cols)]
            cover = greedy_cover(cands, m, seed_index=0)
            coords = [p.coord_norm for p in cands]
            pix = [p.pixel_index for p in cands]
            expect = oracle_greedy(coords, pix, m, 0)
            assert [cands.index(p) for p in cover.points] == expect, trial

    def test_objective_trace_strictly_increasing(self):
        rng = rng_for(3, "cover")
        cands = [make_candidate(int(r), int(c), h=50, w=50)
                 for r, c in zip(rng.integers(0, 50, 30), rng.integers(0, 50, 30))]
        cover = greedy_cover(cands, 10, seed_index=0)
        trace = cover.objective_trace
        assert all(b > a for a, b in zip(trace, trace[1:]))

    def test_spread_beats_top_score_baseline(self):
        # greedy cover keeps points farther apart than picking the k
        # highest-score pixels of a clustered score field
        rng = rng_for(4, "spread")
        greedy_min, topk_min = [], []
        for _ in range(100):
            n, k = 60, 6
            rows = rng.integers(0, 40, size=n)
            cols = rng.integers(0, 40, size=n)
            center = rng.uniform(0, 40, size=2)
            scores = np.exp(-((rows - center[0]) ** 2 + (cols - center[1]) ** 2) / 50.0)
            cands = [make_candidate(int(r), int(c), h=40, w=40, score=float(s))
                     for r, c, s in zip(rows, cols, scores)]
            cands.sort(key=lambda p: (-p.score, p.pixel_index))
            cover = greedy_cover(cands, k, seed_index=0)

            def min_pairwise(points):
                ds = [math.dist(a.coord_norm, b.coord_norm)
                      for i, a in enumerate(points) for b in points[i + 1:]]
                return min(ds) if ds else 0.0

            greedy_min.append(min_pairwise(cover.points))
            topk_min.append(min_pairwise(cands[:k]))
        assert np.mean(greedy_min) >= np.mean(topk_min)


class TestSimilarityPhi:
    def test_own_descriptor_gives_one(self):
        cand = make_candidate(1, 1, descriptor=[0.3, 0.4, 1.0])
        assert similarity_phi(cand, [cand.descriptor]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_descriptors_give_zero(self):
        cand = make_candidate(1, 1, descriptor=[1.0, 0.0, 0.0])
        labeled = [np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]
        assert similarity_phi(cand, labeled) == pytest.approx(0.0, abs=1e-12)

    def test_empty_labeled_set_zero_by_convention(self):
        cand = make_candidate(1, 1, descriptor=[1.0, 1.0])
        assert similarity_phi(cand, []) == 0.0

    def test_hand_computed_mean_cosine(self):
        cand = make_candidate(0, 0, descriptor=[1.0, 1.0, 1.0])
        labeled = [np.array([1.0, 0.0, 1.0]), np.array([0.0, 1.0, 1.0])]
        expected = 0.5 * (2 / math.sqrt(6) + 2 / math.sqrt(6))
        assert similarity_phi(cand, labeled) == pytest.approx(expected, abs=1e-12)


class TestSelectBatch:
    def make_cover(self, phis):
        # descriptors engineered so similarity_phi to [e1] equals the given phi
        points = []
        for i, phi in enumerate(phis):
            d = np.array([phi, math.sqrt(max(0.0, 1 - phi * phi))])
            points.append(make_candidate(0, i, descriptor=d))
        from pointsal.sampling import CoverSet
        return CoverSet(points, [0.0] * len(points))

    def test_empty_labeled_set_keeps_cover_order(self):
        cover = self.make_cover([0.9, 0.1, 0.5])
        batch = select_batch(cover, [], 2)
        assert [p.col for p in batch] == [0, 1]

    def test_k_equals_cover_returns_all(self):
        cover = self.make_cover([0.9, 0.1])
        assert len(select_batch(cover, [np.array([1.0, 0.0])], 2)) == 2

    def test_lowest_phi_selected(self):
        cover = self.make_cover([0.9, 0.1, 0.5, 0.2, 0.8])
        batch = select_batch(cover, [np.array([1.0, 0.0])], 2)
        assert sorted(p.col for p in batch) == [1, 3]

    def test_oversized_k_returns_entire_cover(self):
        cover = self.make_cover([0.3, 0.7])
        assert len(select_batch(cover, [np.array([1.0, 0.0])], 5)) == 2


def test_determinism_of_full_selection_stack():
    rng = rng_for(5, "det")
    clean = rng.uniform(size=(16, 16))
    adv = rng.uniform(size=(16, 16))
    image = rng.uniform(size=(16, 16, 3))
    umap = uncertainty_map(clean, adv)

    def run():
        cands = attach_descriptors(candidate_set(umap, 5.0), image, clean)
        cover = greedy_cover(cands, 8, seed_index=0)
        labeled = [point_descriptor(3, 3, image, clean)]
        return [(p.row, p.col) for p in select_batch(cover, labeled, 4)]

    assert run() == run()


def test_descriptor_layout_and_nonzero_norm():
    image = rng_for(6, "desc").uniform(size=(8, 8, 3))
    prob = rng_for(7, "desc").uniform(size=(8, 8))
    d = point_descriptor(0, 0, image, prob)
    assert d.shape == (7,)  # row, col, 3 channel means, prob, constant
    assert d[-1] == 1.0
    assert np.linalg.norm(d) > 0
