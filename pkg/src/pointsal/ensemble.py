"""Trajectory-ensemble training with warm cosine restarts, plus the
independently-trained deep-ensemble baseline it is measured against.

One trajectory training run produces L snapshots, captured at the final
iteration of each schedule cycle where the learning rate bottoms out; the
snapshots are averaged at prediction time exactly like a deep ensemble, at
1/N of its training cost. Homogenization (mean output drift between
consecutive snapshots) is the diagnostic for how diverse the snapshots are.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import CCLSConfig
from .gridnet import (GridNet, forward, load_checkpoint, save_checkpoint,
                      single_thread_blas, train_step)
from .seeding import rng_for

# dataset items are (image, label_mask, label_classes) triples
TrainItem = tuple[np.ndarray, np.ndarray, np.ndarray]


def ccls_lr(i: int, cfg: CCLSConfig) -> float:
    """Learning rate for 1-based iteration `i` under the cyclic cosine schedule.

    Each cycle spans C = iterations // cycles steps. The cosine phase runs
    over (C - 1) intervals so the rate is exactly eta_max on the first
    iteration of a cycle and exactly eta_min on its last; a one-iteration
    cycle pins the rate at eta_max (the restart point).
    """
    if not (1 <= i <= cfg.iterations):
        raise ValueError(f"iteration {i} outside [1, {cfg.iterations}]")
    c = cfg.cycle_length
    if c <= 1:
        return cfg.eta_max
    phase = (i - 1) % c
    span = cfg.eta_max - cfg.eta_min
    return cfg.eta_min + 0.5 * span * (1.0 + np.cos(np.pi * phase / (c - 1)))


@dataclass
class Trajectory:
    """L parameter snapshots from one training run plus cost accounting."""

    snapshots: list[GridNet]
    update_count: int
    schedule_trace: list[float]
    snapshot_iterations: list[int]

    def __len__(self):
        return len(self.snapshots)


def _run_training(model: GridNet, dataset: list[TrainItem], iterations: int,
                  lr_fn, rng: np.random.Generator, momentum: float,
                  snapshot_iters: frozenset[int]) -> Trajectory:
    """Shared SGD loop: one full-batch step per image per iteration, images
    visited in a freshly shuffled order each iteration."""
    snapshots, trace, snap_at = [], [], []
    with single_thread_blas():
        for i in range(1, iterations + 1):
            eta = lr_fn(i)
            trace.append(eta)
            for idx in rng.permutation(len(dataset)):
                image, mask, classes = dataset[idx]
                train_step(model, image, mask, classes, lr=eta, momentum=momentum)
            if i in snapshot_iters:
                snapshots.append(model.copy())
                snap_at.append(i)
    return Trajectory(snapshots, model.update_count, trace, snap_at)


def train_with_snapshots(model: GridNet, dataset: list[TrainItem],
                         cfg: CCLSConfig, rng: np.random.Generator) -> Trajectory:
    """Train under the cyclic schedule, capturing a snapshot at each cycle end.

    The live model warm-restarts: weights carry over between cycles and are
    never re-randomized. Iterations past the last full cycle keep training
    the live model without producing further snapshots.
    """
    if not any(mask.any() for _, mask, _ in dataset):
        raise ValueError("cannot train: no labeled pixels in the dataset")
    c = cfg.cycle_length
    snapshot_iters = frozenset(c * k for k in range(1, cfg.cycles + 1))
    return _run_training(model, dataset, cfg.iterations, lambda i: ccls_lr(i, cfg),
                         rng, cfg.momentum, snapshot_iters)


def train_constant_lr(model: GridNet, dataset: list[TrainItem], cfg: CCLSConfig,
                      rng: np.random.Generator, lr: float | None = None) -> Trajectory:
    """Schedule ablation: same snapshot timing, flat learning rate."""
    if not any(mask.any() for _, mask, _ in dataset):
        raise ValueError("cannot train: no labeled pixels in the dataset")
    lr = cfg.constant_lr if lr is None else lr
    c = cfg.cycle_length
    snapshot_iters = frozenset(c * k for k in range(1, cfg.cycles + 1))
    return _run_training(model, dataset, cfg.iterations, lambda i: lr, rng,
                         cfg.momentum, snapshot_iters)


def ensemble_predict(models: list[GridNet], image: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the member probability maps."""
    if not models:
        raise ValueError("ensemble_predict needs at least one model")
    acc = forward(models[0], image).copy()
    for m in models[1:]:
        acc += forward(m, image)
    return acc / len(models)


def homogenization(snapshots: list[GridNet], probe_images: list[np.ndarray]) -> float:
    """Mean absolute output drift between consecutive snapshots.

    delta = (1/tau) * sum_t mean_pixels |f_{t+1}(x) - f_t(x)|, averaged over
    the probe images; tau is the number of consecutive pairs in the window.
    """
    if len(snapshots) < 2:
        raise ValueError("homogenization needs at least two snapshots")
    if not probe_images:
        raise ValueError("homogenization needs at least one probe image")
    tau = len(snapshots) - 1
    total = 0.0
    for image in probe_images:
        preds = [forward(m, image) for m in snapshots]
        total += sum(
            float(np.mean(np.abs(preds[t + 1] - preds[t]))) for t in range(tau)
        ) / tau
    return total / len(probe_images)


@dataclass
class EnsembleBaseline:
    """N independently initialized and trained models (outputs averaged)."""

    members: list[GridNet] = field(default_factory=list)
    update_count: int = 0


def train_den(member_seeds: list[int], dataset: list[TrainItem], iterations: int,
              lr: float, architecture_id: str, in_channels: int,
              momentum: float = 0.9, hidden=None) -> EnsembleBaseline:
    """Train the deep-ensemble baseline: one fresh model per seed, constant
    learning rate, independently seeded data shuffles. Total update count is
    N times a single model's."""
    if len(member_seeds) < 2:
        raise ValueError("a deep ensemble needs at least 2 members")
    if len(set(member_seeds)) != len(member_seeds):
        raise ValueError("duplicate member seeds would defeat ensemble diversity")
    ensemble = EnsembleBaseline()
    for seed in member_seeds:
        model = GridNet.create(architecture_id, in_channels, seed=seed, hidden=hidden)
        rng = rng_for(seed, "den-shuffle")
        if iterations > 0:
            _run_training(model, dataset, iterations, lambda i: lr, rng,
                          momentum, frozenset())
        ensemble.members.append(model)
        ensemble.update_count += model.update_count
    return ensemble


def save_trajectory(trajectory: Trajectory, out_dir):
    """One checkpoint per snapshot plus a text index (cycle, iteration, eta)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, (model, it) in enumerate(
        zip(trajectory.snapshots, trajectory.snapshot_iterations)
    ):
        save_checkpoint(model, out_dir / f"snapshot_{k:02d}.ckpt")
        trace = trajectory.schedule_trace
        eta = trace[it - 1] if 0 <= it - 1 < len(trace) else float("nan")
        lines.append(f"{k}\t{it}\t{eta!r}")
    (out_dir / "index.tsv").write_text("\n".join(lines) + "\n")


def load_trajectory_snapshots(out_dir) -> list[GridNet]:
    out_dir = Path(out_dir)
    paths = sorted(out_dir.glob("snapshot_*.ckpt"))
    if not paths:
        raise FileNotFoundError(f"no snapshots under {out_dir}")
    return [load_checkpoint(p) for p in paths]
