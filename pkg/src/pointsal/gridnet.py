"""A small differentiable segmentation net on dense grids.

The model is a fixed stack of 3x3 same-padding conv blocks with ReLU, ending
in a single-channel conv + sigmoid head, so the output probability map has
the input's spatial size. Forward and reverse passes are written directly in
numpy (im2col + matmul); gradients are exact for both the parameters and the
input image, which the adversarial attack differentiates through.

All arithmetic is float64. Images are (H, W, C) arrays in [0, 1]; probability
maps are (H, W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .labels import SparseLabels


def single_thread_blas():
    """Pin BLAS to one thread; the conv matmuls here are too small to shard
    (multithreaded BLAS measures ~1.5x slower on them)."""
    return threadpool_limits(limits=1, user_api="blas")

# hidden channel widths per named architecture; every layer is a 3x3 conv
ARCHITECTURES = {
    "k16": (16, 16, 16),
    "k12x24": (12, 24, 12),
}

EPS_CLAMP = 1e-7

CHECKPOINT_MAGIC = b"GRIDNET1\n"


class GridNet:
    """Parameter store for one model instance.

    `weights[i]` has shape (out_ch, in_ch, 3, 3), `biases[i]` shape (out_ch,).
    Velocity buffers belong to the momentum optimizer and are not part of a
    model's value; snapshots copy parameters only.
    """

    def __init__(self, architecture_id, in_channels, weights, biases, seed,
                 update_count=0):
        self.architecture_id = architecture_id
        self.in_channels = in_channels
        self.weights = weights
        self.biases = biases
        self.seed = seed
        self.update_count = update_count
        self.velocities = [
            (np.zeros_like(w), np.zeros_like(b)) for w, b in zip(weights, biases)
        ]

    @classmethod
    def create(cls, architecture_id="k16", in_channels=3, seed=0, hidden=None):
        """Seeded Glorot-uniform initialization.

        `hidden` overrides the named architecture's channel widths (used by
        small test nets); the head conv to one channel is always appended.
        """
        if hidden is None:
            if architecture_id not in ARCHITECTURES:
                raise ValueError(f"unknown architecture: {architecture_id}")
            hidden = ARCHITECTURES[architecture_id]
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        channels = [in_channels, *hidden, 1]
        weights, biases = [], []
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            fan_in, fan_out = c_in * 9, c_out * 9
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(c_out, c_in, 3, 3)))
            biases.append(np.zeros(c_out))
        return cls(architecture_id, in_channels, weights, biases, seed)

    @property
    def num_layers(self):
        return len(self.weights)

    def num_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def copy(self) -> "GridNet":
        """Value copy of the parameters (a trajectory snapshot)."""
        return GridNet(
            self.architecture_id,
            self.in_channels,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            self.update_count,
        )


def _im2col(x: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H*W, 9*C) patch matrix for 3x3 same-padding convolution.

    Patch columns are ordered (ki, kj, c) so the reshape is allocation-free;
    `_weight_matrix` lays kernels out to match.
    """
    h, w, c = x.shape
    xp = np.zeros((h + 2, w + 2, c))
    xp[1:h + 1, 1:w + 1, :] = x
    patches = np.empty((h, w, 3, 3, c))
    for ki in range(3):
        for kj in range(3):
            patches[:, :, ki, kj, :] = xp[ki:ki + h, kj:kj + w, :]
    return patches.reshape(h * w, 9 * c)


def _weight_matrix(wt: np.ndarray) -> np.ndarray:
    """(out, in, 3, 3) kernel stack as an (out, 9*in) matrix in patch order."""
    return np.ascontiguousarray(wt.transpose(0, 2, 3, 1)).reshape(wt.shape[0], -1)


def _col2im(dcols: np.ndarray, h: int, w: int, c: int) -> np.ndarray:
    """Adjoint of `_im2col`: scatter-add patch gradients back to the grid."""
    d = dcols.reshape(h, w, 3, 3, c)
    dxp = np.zeros((h + 2, w + 2, c))
    for ki in range(3):
        for kj in range(3):
            dxp[ki:ki + h, kj:kj + w, :] += d[:, :, ki, kj, :]
    return dxp[1:h + 1, 1:w + 1, :]


def _check_image(model: GridNet, image: np.ndarray):
    if image.ndim != 3 or image.shape[2] != model.in_channels:
        raise ValueError(
            f"image shape {image.shape} does not match model input "
            f"({model.in_channels} channels)"
        )


def _forward_full(model: GridNet, image: np.ndarray):
    """Forward pass keeping per-layer patch matrices and pre-activations."""
    h, w, _ = image.shape
    x = image
    cols, preacts = [], []
    for li, (wt, b) in enumerate(zip(model.weights, model.biases)):
        pm = _im2col(x)
        z = pm @ _weight_matrix(wt).T + b
        cols.append(pm)
        preacts.append(z)
        if li < model.num_layers - 1:
            x = np.maximum(z, 0.0).reshape(h, w, -1)
    return _sigmoid(preacts[-1][:, 0]).reshape(h, w), cols, preacts


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # overflow-safe in both tails
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(model: GridNet, image: np.ndarray) -> np.ndarray:
    """Probability map f(x). Pure in (weights, input); same H x W as the input."""
    _check_image(model, image)
    prob, _, _ = _forward_full(model, image)
    return prob


def bce_loss(pred: np.ndarray, mask: np.ndarray, classes: np.ndarray) -> float:
    """Mean binary cross-entropy over masked pixels (0 when the mask is empty).

    Predictions are clamped to [EPS_CLAMP, 1-EPS_CLAMP] before the logs.
    """
    n = int(mask.sum())
    if n == 0:
        return 0.0
    p = np.clip(pred[mask], EPS_CLAMP, 1.0 - EPS_CLAMP)
    y = classes[mask]
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / n)


def masked_bce(pred: np.ndarray, labels: SparseLabels) -> float:
    mask, classes = labels.as_arrays()
    if mask.shape != pred.shape:
        raise ValueError(f"labels {mask.shape} do not match prediction {pred.shape}")
    return bce_loss(pred, mask, classes)


def _backprop(model: GridNet, image: np.ndarray, mask: np.ndarray,
              classes: np.ndarray, need_weights: bool, need_input: bool):
    """Gradients of the masked BCE loss; returns (loss, weight_grads, input_grad).

    The head gradient is (p - y)/n at labeled pixels inside the clamp window
    and exactly zero where the clamp saturates, matching the loss actually
    evaluated by `bce_loss`.
    """
    h, w, c = image.shape
    prob, cols, preacts = _forward_full(model, image)
    loss = bce_loss(prob, mask, classes)

    n = int(mask.sum())
    dz = np.zeros((h * w, 1))
    if n > 0:
        inside = (prob > EPS_CLAMP) & (prob < 1.0 - EPS_CLAMP)
        live = mask & inside
        residual = np.where(live, (prob - classes) / n, 0.0)
        dz[:, 0] = residual.ravel()

    weight_grads = []
    dinput = None
    for li in range(model.num_layers - 1, -1, -1):
        wt = model.weights[li]
        wmat = _weight_matrix(wt)
        if need_weights:
            out_ch, in_ch = wt.shape[:2]
            dwmat = dz.T @ cols[li]
            dw = dwmat.reshape(out_ch, 3, 3, in_ch).transpose(0, 3, 1, 2)
            db = dz.sum(axis=0)
            weight_grads.append((dw, db))
        if li > 0:
            dcols = dz @ wmat
            dx = _col2im(dcols, h, w, wt.shape[1])
            relu_gate = preacts[li - 1] > 0.0
            dz = dx.reshape(h * w, -1) * relu_gate
        elif need_input:
            dcols = dz @ wmat
            dinput = _col2im(dcols, h, w, c)

    weight_grads.reverse()
    return loss, weight_grads if need_weights else None, dinput


def backward_weights(model: GridNet, image: np.ndarray, labels_or_arrays):
    """Gradient of masked BCE w.r.t. every parameter: list of (dW, db)."""
    _check_image(model, image)
    mask, classes = _label_arrays(labels_or_arrays)
    _, grads, _ = _backprop(model, image, mask, classes, True, False)
    return grads


def backward_input(model: GridNet, image: np.ndarray, labels_or_arrays) -> np.ndarray:
    """Gradient of masked BCE w.r.t. the input grid, image-shaped."""
    _check_image(model, image)
    mask, classes = _label_arrays(labels_or_arrays)
    _, _, dinput = _backprop(model, image, mask, classes, False, True)
    return dinput


def _label_arrays(labels_or_arrays):
    if isinstance(labels_or_arrays, SparseLabels):
        return labels_or_arrays.as_arrays()
    mask, classes = labels_or_arrays
    return mask, classes


def sgd_step(model: GridNet, grads, lr: float, momentum: float = 0.9,
             images_in_batch: int = 1) -> GridNet:
    """Momentum SGD update in place; bumps the update counter per batch image.

    Non-finite gradients raise and leave the model untouched.
    """
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    for dw, db in grads:
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise FloatingPointError("non-finite gradient; model state unchanged")
    for (w, b), (vw, vb), (dw, db) in zip(
        zip(model.weights, model.biases), model.velocities, grads
    ):
        vw *= momentum
        vw += dw
        vb *= momentum
        vb += db
        w -= lr * vw
        b -= lr * vb
    model.update_count += images_in_batch
    return model


def train_step(model: GridNet, image: np.ndarray, mask: np.ndarray,
               classes: np.ndarray, lr: float, momentum: float = 0.9) -> float:
    """One full-batch step on a single image's labeled pixels; returns the loss."""
    loss, grads, _ = _backprop(model, image, mask, classes, True, False)
    sgd_step(model, grads, lr, momentum)
    return loss


@dataclass
class GradCheckReport:
    max_rel_err: float
    num_params_checked: int


def gradient_check(model: GridNet, image: np.ndarray, labels_or_arrays,
                   step: float = 1e-4, check_input: bool = True) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Relative error uses an absolute floor of 1e-3 on the denominator so that
    near-zero gradients are compared at a matching absolute tolerance. Only
    practical for small nets and images.
    """
    mask, classes = _label_arrays(labels_or_arrays)
    loss_fn = lambda: bce_loss(forward(model, image), mask, classes)

    _, weight_grads, input_grad = _backprop(model, image, mask, classes, True, True)

    max_rel = 0.0
    checked = 0

    def compare(analytic, plus, minus):
        nonlocal max_rel, checked
        fd = (plus - minus) / (2.0 * step)
        denom = max(abs(analytic), abs(fd), 1e-3)
        max_rel = max(max_rel, abs(analytic - fd) / denom)
        checked += 1

    for (w, b), (dw, db) in zip(zip(model.weights, model.biases), weight_grads):
        for arr, grad in ((w, dw), (b, db)):
            flat, gflat = arr.ravel(), grad.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = loss_fn()
                flat[i] = orig - step
                lm = loss_fn()
                flat[i] = orig
                compare(gflat[i], lp, lm)

    if check_input:
        flat, gflat = image.ravel(), input_grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn()
            flat[i] = orig - step
            lm = loss_fn()
            flat[i] = orig
            compare(gflat[i], lp, lm)

    return GradCheckReport(max_rel_err=max_rel, num_params_checked=checked)


def save_checkpoint(model: GridNet, path):
    """Binary container: magic, JSON header line, raw float64-LE flat params."""
    import json

    header = {
        "architecture_id": model.architecture_id,
        "in_channels": model.in_channels,
        "shapes": [list(w.shape) for w in model.weights],
        "seed": int(model.seed),
        "update_count": int(model.update_count),
    }
    flat = model.flat_params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path) -> GridNet:
    import json

    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    shapes = [tuple(s) for s in header["shapes"]]
    total = sum(int(np.prod(s)) + s[0] for s in shapes)
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if flat.size != total:
        raise ValueError(f"{path}: parameter payload has {flat.size} values, "
                         f"expected {total}")
    weights, biases = [], []
    off = 0
    for s in shapes:
        n = int(np.prod(s))
        weights.append(flat[off:off + n].reshape(s).copy())
        off += n
        biases.append(flat[off:off + s[0]].copy())
        off += s[0]
    return GridNet(header["architecture_id"], header["in_channels"], weights,
                   biases, header["seed"], header["update_count"])
