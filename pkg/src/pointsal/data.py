"""Synthetic salient-blob dataset generation and portable image IO.

Images are textured elliptical or polygonal blobs on a noisy background with
an exact analytic binary mask (a pixel is salient iff its center lies inside
a blob). Everything is derived from Philox streams keyed by (seed, index),
so a dataset is reproducible to the bit from its manifest header.

On-disk formats are binary netpbm: P5 (PGM) for single-channel grids, P6
(PPM) for color, maxval 65535, big-endian samples. Masks are stored as PGM
with values {0, 65535}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import rng_for


class PNMParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_pnm(path, values: np.ndarray, maxval: int = 65535):
    """Write integer sample values as binary PGM/PPM."""
    values = np.asarray(values)
    if values.ndim == 2:
        magic, h, w = b"P5", *values.shape
    elif values.ndim == 3 and values.shape[2] == 3:
        magic = b"P6"
        h, w = values.shape[:2]
    else:
        raise ValueError(f"cannot encode array of shape {values.shape}")
    if values.min() < 0 or values.max() > maxval:
        raise ValueError("sample values out of range for maxval")
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(np.ascontiguousarray(values.astype(dtype)).tobytes())


def write_image(path, image: np.ndarray):
    """Store a unit-interval image at 16-bit depth (PGM or PPM by channels)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0,1]")
    write_pnm(path, np.round(image * 65535.0).astype(np.uint32), 65535)


def _read_header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise PNMParseError("unterminated comment in header", pos)
            pos = nl + 1
        else:
            break
    if pos >= len(data):
        raise PNMParseError("unexpected end of header", pos)
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_pnm(path) -> tuple[np.ndarray, int]:
    """Read binary PGM/PPM into integer samples; returns (values, maxval)."""
    data = Path(path).read_bytes()
    magic, pos = _read_header_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise PNMParseError(f"unsupported magic {magic!r}", 0)
    dims = []
    for _ in range(3):
        token, pos = _read_header_token(data, pos)
        if not token.isdigit():
            raise PNMParseError(f"expected integer header field, got {token!r}",
                                pos - len(token))
        dims.append(int(token))
    w, h, maxval = dims
    if maxval == 0 or maxval > 65535:
        raise PNMParseError(f"unsupported maxval {maxval}", pos)
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = h * w * channels * dtype.itemsize
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise PNMParseError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}",
            pos + len(payload),
        )
    values = np.frombuffer(payload, dtype=dtype).astype(np.uint32)
    if channels == 3:
        return values.reshape(h, w, 3), maxval
    return values.reshape(h, w), maxval


def read_image(path) -> np.ndarray:
    """Inverse of `write_image` up to the 16-bit quantization step."""
    values, maxval = read_pnm(path)
    return values.astype(np.float64) / maxval


def read_mask(path) -> np.ndarray:
    values, maxval = read_pnm(path)
    return (values.astype(np.float64) / maxval) >= 0.5


@dataclass
class ManifestEntry:
    image_id: str
    image_path: str
    mask_path: str


@dataclass
class DatasetManifest:
    split: str
    entries: list[ManifestEntry]
    generator_seed: int
    generator_params: dict = field(default_factory=dict)
    root: Path | None = None

    def __len__(self):
        return len(self.entries)

    def image_ids(self):
        return [e.image_id for e in self.entries]

    def _resolve(self, rel):
        return Path(rel) if self.root is None else self.root / rel

    def load_image(self, entry: ManifestEntry) -> np.ndarray:
        return read_image(self._resolve(entry.image_path))

    def load_mask(self, entry: ManifestEntry) -> np.ndarray:
        return read_mask(self._resolve(entry.mask_path))

    def entry_by_id(self, image_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.image_id == image_id:
                return e
        raise KeyError(f"no image {image_id!r} in {self.split} manifest")

    def save(self, path):
        path = Path(path)
        lines = [
            f"# split={self.split}",
            f"# generator_seed={self.generator_seed}",
            f"# generator_params={json.dumps(self.generator_params, sort_keys=True)}",
        ]
        for e in self.entries:
            lines.append(f"{e.image_id}\t{e.image_path}\t{e.mask_path}")
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        split, seed, params = "train", 0, {}
        entries = []
        for line in path.read_text().splitlines():
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("split="):
                    split = body[len("split="):]
                elif body.startswith("generator_seed="):
                    seed = int(body[len("generator_seed="):])
                elif body.startswith("generator_params="):
                    params = json.loads(body[len("generator_params="):])
                continue
            if not line.strip():
                continue
            image_id, image_path, mask_path = line.split("\t")
            entries.append(ManifestEntry(image_id, image_path, mask_path))
        ids = [e.image_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{path}: duplicate image ids in manifest")
        return cls(split, entries, seed, params, root=path.parent)


# ---------------------------------------------------------------------------
# synthetic generation


def _bilinear_noise(rng, h, w, cells, amplitude):
    """Low-frequency noise: a coarse uniform lattice upsampled bilinearly."""
    lattice = rng.uniform(-amplitude, amplitude, size=(cells + 1, cells + 1))
    rows = np.linspace(0, cells, h)
    cols = np.linspace(0, cells, w)
    r0 = np.floor(rows).astype(int).clip(0, cells - 1)
    c0 = np.floor(cols).astype(int).clip(0, cells - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = lattice[r0][:, c0] * (1 - fc) + lattice[r0][:, c0 + 1] * fc
    bot = lattice[r0 + 1][:, c0] * (1 - fc) + lattice[r0 + 1][:, c0 + 1] * fc
    return top * (1 - fr) + bot * fr


def _ellipse_mask(h, w, center, axes, theta):
    cy, cx = center
    a, b = axes
    yy, xx = np.mgrid[0:h, 0:w]
    dy = (yy + 0.5) - cy
    dx = (xx + 0.5) - cx
    ct, st = np.cos(theta), np.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _star_polygon_mask(h, w, center, angles, radii):
    """Star-convex polygon with straight edges between polar vertices.

    A pixel center is inside iff its radius is at most the radius of the
    edge chord at the pixel's angle.
    """
    cy, cx = center
    yy, xx = np.mgrid[0:h, 0:w]
    dy = (yy + 0.5) - cy
    dx = (xx + 0.5) - cx
    r = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)  # [-pi, pi]

    angles = np.asarray(angles)
    radii = np.asarray(radii)
    # wrap so every pixel angle falls between two consecutive vertices
    ang = np.concatenate([angles, [angles[0] + 2 * np.pi]])
    rad = np.concatenate([radii, [radii[0]]])
    phi_w = np.where(phi < ang[0], phi + 2 * np.pi, phi)
    seg = np.searchsorted(ang, phi_w, side="right") - 1
    seg = seg.clip(0, len(angles) - 1)
    a1, a2 = ang[seg], ang[seg + 1]
    r1, r2 = rad[seg], rad[seg + 1]
    # radial distance of the straight chord (r1,a1)-(r2,a2) at angle phi
    denom = r2 * np.sin(a2 - phi_w) + r1 * np.sin(phi_w - a1)
    chord = np.where(denom > 1e-12, r1 * r2 * np.sin(a2 - a1) / np.maximum(denom, 1e-12),
                     np.inf)
    return r <= chord


def _draw_blob(rng, size, radius_lo=0.13, radius_hi=0.22):
    """Sample one blob shape; returns its boolean membership mask."""
    r_lo, r_hi = radius_lo * size, radius_hi * size
    cy, cx = rng.uniform(0.25 * size, 0.75 * size, size=2)
    if rng.random() < 0.5:
        a, b = rng.uniform(r_lo, r_hi, size=2)
        theta = rng.uniform(0, np.pi)
        return _ellipse_mask(size, size, (cy, cx), (a, b), theta)
    k = int(rng.integers(5, 8))
    angles = np.sort(rng.uniform(-np.pi, np.pi, size=k))
    radii = rng.uniform(r_lo, r_hi, size=k)
    return _star_polygon_mask(size, size, (cy, cx), angles, radii)


def render_example(seed: int, index: int, size: int, channels: int = 3,
                   blob_min: int = 1, blob_max: int = 3,
                   distractor_rate: float = 0.2, radius_lo: float = 0.13,
                   radius_hi: float = 0.22) -> tuple[np.ndarray, np.ndarray]:
    """One (image, mask) pair. The mask is exact blob-union membership.

    Salient blobs are brighter than the background and carry fine per-pixel
    texture; distractor blobs (background class) get near-blob brightness
    but stay smooth, so intensity alone does not solve the task.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if radius_hi * size >= size / 2:
        raise ValueError("blob radius range does not fit in the image")
    rng = rng_for(seed, "image", index)
    for _ in range(200):
        n_blobs = int(rng.integers(blob_min, blob_max + 1))
        mask = np.zeros((size, size), dtype=bool)
        for _ in range(n_blobs):
            mask |= _draw_blob(rng, size, radius_lo, radius_hi)
        frac = mask.mean()
        if 0.05 <= frac <= 0.5:
            break
    else:
        raise RuntimeError("could not sample a mask with salient fraction in "
                           "[0.05, 0.5] after 200 attempts")

    img = np.empty((size, size, channels))
    for ch in range(channels):
        base = rng.uniform(0.25, 0.40)
        img[:, :, ch] = base + _bilinear_noise(rng, size, size, max(2, size // 8), 0.10)
    img += rng.uniform(-0.02, 0.02, size=img.shape)

    # up to two smooth near-blob-brightness distractors (background class)
    for _ in range(2):
        if rng.random() < distractor_rate:
            distractor = _draw_blob(rng, size, radius_lo, radius_hi) & ~mask
            tint = rng.uniform(0.55, 0.75, size=channels)
            smooth = _bilinear_noise(rng, size, size, max(2, size // 8), 0.05)
            for ch in range(channels):
                img[:, :, ch][distractor] = tint[ch] + smooth[distractor]

    tint = rng.uniform(0.60, 0.85, size=channels)
    texture = rng.uniform(-0.12, 0.12, size=(size, size, channels))
    for ch in range(channels):
        img[:, :, ch][mask] = tint[ch] + texture[:, :, ch][mask]

    return np.clip(img, 0.0, 1.0), mask


def generate_synthetic(seed: int, count: int, size: int, out_dir,
                       split: str = "train", channels: int = 3,
                       blob_min: int = 1, blob_max: int = 3,
                       distractor_rate: float = 0.2, radius_lo: float = 0.13,
                       radius_hi: float = 0.22) -> DatasetManifest:
    """Write `count` image/mask pairs plus a manifest; fully seeded."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    (out_dir / split).mkdir(parents=True, exist_ok=True)
    params = {
        "size": size, "channels": channels, "blob_min": blob_min,
        "blob_max": blob_max, "distractor_rate": distractor_rate,
        "radius_lo": radius_lo, "radius_hi": radius_hi,
        "rng": "philox4x64-10",
    }
    entries = []
    for i in range(count):
        image, mask = render_example(seed, i, size, channels, blob_min,
                                     blob_max, distractor_rate, radius_lo,
                                     radius_hi)
        image_id = f"{split}_{i:04d}"
        img_rel = f"{split}/{image_id}.ppm" if channels == 3 else f"{split}/{image_id}.pgm"
        msk_rel = f"{split}/{image_id}_mask.pgm"
        write_image(out_dir / img_rel, image)
        write_pnm(out_dir / msk_rel, mask.astype(np.uint32) * 65535, 65535)
        entries.append(ManifestEntry(image_id, img_rel, msk_rel))
    manifest = DatasetManifest(split, entries, seed, params, root=out_dir)
    manifest.save(out_dir / f"manifest_{split}.tsv")
    return manifest


def generate_dataset(out_dir, seed: int, train_count: int, test_count: int,
                     size: int, **kwargs) -> tuple[DatasetManifest, DatasetManifest]:
    """Train and test splits with disjoint derived streams."""
    train = generate_synthetic(seed, train_count, size, out_dir, "train", **kwargs)
    test = generate_synthetic(seed + 1_000_003, test_count, size, out_dir, "test", **kwargs)
    return train, test


def generate_for_config(out_dir, seed: int, data_cfg) -> tuple[DatasetManifest, DatasetManifest]:
    """`generate_dataset` driven by a DataConfig."""
    return generate_dataset(
        out_dir, seed, data_cfg.train_count, data_cfg.test_count, data_cfg.size,
        channels=data_cfg.channels, blob_min=data_cfg.blob_min,
        blob_max=data_cfg.blob_max, distractor_rate=data_cfg.distractor_rate,
        radius_lo=data_cfg.radius_lo, radius_hi=data_cfg.radius_hi,
    )
