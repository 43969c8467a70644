"""L-inf projected gradient ascent on the ensemble's own prediction.

The attack maximizes the dense cross-entropy between the ensemble output and
pseudo-labels hardened from the clean prediction, stepping by the sign of
the mean per-member input gradient and projecting back into the epsilon ball
intersected with [0, 1]. Attacked images are only ever used to score
uncertainty; models are never trained on them and the attack never touches
model state.
"""

from __future__ import annotations

import numpy as np

from .config import AttackConfig
from .gridnet import GridNet, _backprop, _check_image, single_thread_blas


def make_pseudo_labels(clean_prob: np.ndarray) -> np.ndarray:
    """Harden a probability map; ties at 0.5 resolve to the salient class."""
    return (clean_prob >= 0.5).astype(np.int64)


def _as_members(model_or_ensemble) -> list[GridNet]:
    if isinstance(model_or_ensemble, GridNet):
        return [model_or_ensemble]
    members = list(model_or_ensemble)
    if not members:
        raise ValueError("attack target must contain at least one model")
    return members


def ensemble_input_gradient(members: list[GridNet], image: np.ndarray,
                            classes: np.ndarray) -> np.ndarray:
    """Mean over members of the input gradient of the dense BCE loss."""
    mask = np.ones(classes.shape, dtype=bool)
    acc = None
    for m in members:
        _, _, dinput = _backprop(m, image, mask, classes.astype(np.float64),
                                 need_weights=False, need_input=True)
        acc = dinput if acc is None else acc + dinput
    return acc / len(members)


def pgd_attack(model_or_ensemble, image: np.ndarray, pseudo_labels: np.ndarray,
               cfg: AttackConfig) -> np.ndarray:
    """Iterated sign-gradient ascent within the L-inf ball around `image`.

    Returns a new array; the input image and the models are left untouched.
    """
    members = _as_members(model_or_ensemble)
    for m in members:
        _check_image(m, image)
    if pseudo_labels.shape != image.shape[:2]:
        raise ValueError(
            f"pseudo labels {pseudo_labels.shape} do not match image {image.shape[:2]}"
        )
    cfg.validate()
    lo = np.maximum(image - cfg.epsilon, 0.0)
    hi = np.minimum(image + cfg.epsilon, 1.0)
    adv = image.copy()
    with single_thread_blas():
        for _ in range(cfg.steps):
            grad = ensemble_input_gradient(members, adv, pseudo_labels)
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError("non-finite input gradient during attack")
            adv = np.clip(adv + cfg.alpha * np.sign(grad), lo, hi)
    return adv
