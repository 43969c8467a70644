"""Per-pixel uncertainty from adversarial prediction flips.

Comparing the clean and attacked ensemble predictions splits pixels into
three robustness regions: predictions that survive the attack (SR), flips
whose clean prediction was confident (PIR), and flips whose clean prediction
already sat near the decision boundary (PSR). The uncertainty score is the
inverted clean margin gated by the flip, so PSR pixels score highest and SR
pixels score exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import write_pnm
from .gridnet import EPS_CLAMP

SR, PIR, PSR = 0, 1, 2
REGION_NAMES = {SR: "SR", PIR: "PIR", PSR: "PSR"}


def bvsb(p):
    """Best-versus-second-best margin; |2p - 1| for a binary class pair."""
    return np.abs(2.0 * np.asarray(p) - 1.0)


def hard_class(prob: np.ndarray) -> np.ndarray:
    """Argmax of (p, 1-p); ties at 0.5 resolve to the salient class."""
    return (np.asarray(prob) >= 0.5).astype(np.int64)


def _check_shapes(clean, adv):
    if clean.shape != adv.shape:
        raise ValueError(f"shape mismatch: clean {clean.shape} vs adversarial {adv.shape}")


def classify_regions(clean_ens: np.ndarray, adv_ens: np.ndarray,
                     margin_threshold: float = 0.5) -> np.ndarray:
    """H x W region tags in {SR, PIR, PSR}."""
    _check_shapes(clean_ens, adv_ens)
    flip = hard_class(clean_ens) != hard_class(adv_ens)
    margin = bvsb(np.clip(clean_ens, EPS_CLAMP, 1.0 - EPS_CLAMP))
    tags = np.full(clean_ens.shape, SR, dtype=np.uint8)
    tags[flip & (margin >= margin_threshold)] = PIR
    tags[flip & (margin < margin_threshold)] = PSR
    return tags


@dataclass
class UncertaintyMap:
    scores: np.ndarray
    region_tags: np.ndarray
    source_round: int = 0

    @property
    def shape(self):
        return self.scores.shape


def uncertainty_map(clean_ens: np.ndarray, adv_ens: np.ndarray,
                    margin_threshold: float = 0.5,
                    source_round: int = 0) -> UncertaintyMap:
    """Flip-gated inverse clean margin.

    Margins are computed on probabilities clamped away from {0, 1} so every
    flipped pixel scores strictly positive; unflipped pixels score zero.
    """
    _check_shapes(clean_ens, adv_ens)
    flip = hard_class(clean_ens) != hard_class(adv_ens)
    margin = bvsb(np.clip(clean_ens, EPS_CLAMP, 1.0 - EPS_CLAMP))
    scores = np.where(flip, 1.0 - margin, 0.0)
    tags = classify_regions(clean_ens, adv_ens, margin_threshold)
    return UncertaintyMap(scores, tags, source_round)


def dump_scores_pgm(umap: UncertaintyMap, path):
    write_pnm(path, np.round(umap.scores * 65535.0).astype(np.uint32), 65535)


def dump_regions_pgm(umap: UncertaintyMap, path):
    shade = np.zeros(umap.region_tags.shape, dtype=np.uint32)
    shade[umap.region_tags == PIR] = 128
    shade[umap.region_tags == PSR] = 255
    write_pnm(path, shade, 255)
