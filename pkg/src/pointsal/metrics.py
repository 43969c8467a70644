"""Saliency evaluation: F-measure over a threshold sweep plus MAE.

Precision and recall are averaged over images at each of 255 evenly spaced
thresholds (t = i/254), then combined into F_beta with beta^2 = 0.3; maxF
takes the best threshold and avgF the mean over thresholds. Precision is 0
at thresholds where nothing is predicted positive.
"""

from __future__ import annotations

import numpy as np

BETA_SQ = 0.3
NUM_THRESHOLDS = 255

THRESHOLDS = np.linspace(0.0, 1.0, NUM_THRESHOLDS)


def precision_recall(pred: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-threshold precision and recall for one image."""
    binary = pred.ravel()[None, :] >= THRESHOLDS[:, None]
    gt = mask.ravel()[None, :].astype(bool)
    tp = (binary & gt).sum(axis=1).astype(np.float64)
    predicted = binary.sum(axis=1).astype(np.float64)
    actual = float(gt.sum())
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = tp / actual if actual > 0 else np.zeros_like(tp)
    return precision, recall


def f_beta(precision: np.ndarray, recall: np.ndarray) -> np.ndarray:
    num = (1.0 + BETA_SQ) * precision * recall
    den = BETA_SQ * precision + recall
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def evaluate_maps(preds: list[np.ndarray], masks: list[np.ndarray]) -> dict:
    """Dataset-level metrics for probability maps against binary masks."""
    if not preds or len(preds) != len(masks):
        raise ValueError("evaluation needs matching nonempty prediction/mask lists")
    p_sum = np.zeros(NUM_THRESHOLDS)
    r_sum = np.zeros(NUM_THRESHOLDS)
    mae_sum = 0.0
    for pred, mask in zip(preds, masks):
        if pred.shape != mask.shape:
            raise ValueError("prediction/mask shape mismatch")
        p, r = precision_recall(pred, mask)
        p_sum += p
        r_sum += r
        mae_sum += float(np.mean(np.abs(pred - mask.astype(np.float64))))
    precision = p_sum / len(preds)
    recall = r_sum / len(preds)
    f = f_beta(precision, recall)
    return {
        "maxF": float(f.max()),
        "avgF": float(f.mean()),
        "mae": mae_sum / len(preds),
        "precision": precision,
        "recall": recall,
    }
