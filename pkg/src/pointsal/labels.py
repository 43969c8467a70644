"""Sparse per-image point labels and their merge rules.

A label set holds every supervised pixel of one image: the random seed
points, the oracle-queried points, and the pixels filled in by superpixel
propagation. Coordinates are unique; propagated entries always reference the
annotated point they were copied from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SALIENT = 1
BACKGROUND = 0

SOURCE_SEED = "seed"
SOURCE_QUERIED = "queried"
SOURCE_PROPAGATED = "propagated"
_POINT_SOURCES = (SOURCE_SEED, SOURCE_QUERIED)


@dataclass(frozen=True)
class LabelEntry:
    row: int
    col: int
    cls: int
    source: str
    round: int
    # annotated pixel this entry was propagated from (None for point sources)
    source_point: tuple[int, int] | None = None


class SparseLabels:
    """Labeled pixels of a single image, keyed by (row, col)."""

    def __init__(self, image_id: str, height: int, width: int):
        self.image_id = image_id
        self.height = height
        self.width = width
        self._entries: dict[tuple[int, int], LabelEntry] = {}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, coord):
        return tuple(coord) in self._entries

    def get(self, row: int, col: int) -> LabelEntry | None:
        return self._entries.get((row, col))

    def entries(self) -> list[LabelEntry]:
        """All entries in canonical row-major order."""
        return [self._entries[k] for k in sorted(self._entries)]

    def point_entries(self) -> list[LabelEntry]:
        """Seed and queried entries only (the annotated points D_S)."""
        return [e for e in self.entries() if e.source in _POINT_SOURCES]

    def point_count(self) -> int:
        return sum(1 for e in self._entries.values() if e.source in _POINT_SOURCES)

    def _check_bounds(self, row, col):
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(
                f"label at ({row},{col}) outside {self.height}x{self.width} image"
            )

    def add_point(self, row: int, col: int, cls: int, source: str, round: int):
        """Record an annotated point. Re-annotating a point label is an error;
        annotating a pixel that only carried a propagated label upgrades it."""
        self._check_bounds(row, col)
        if source not in _POINT_SOURCES:
            raise ValueError(f"not a point source: {source}")
        existing = self._entries.get((row, col))
        if existing is not None and existing.source in _POINT_SOURCES:
            raise ValueError(f"duplicate annotation at ({row},{col}) on {self.image_id}")
        self._entries[(row, col)] = LabelEntry(row, col, int(cls), source, round)

    def add_propagated(self, row: int, col: int, cls: int, round: int,
                       source_point: tuple[int, int]):
        """Record a propagated label.

        Conflict rule: annotated points always keep their class; among
        propagated labels the later round wins.
        """
        self._check_bounds(row, col)
        existing = self._entries.get((row, col))
        if existing is not None:
            if existing.source in _POINT_SOURCES:
                return
            if existing.round > round:
                return
        self._entries[(row, col)] = LabelEntry(
            row, col, int(cls), SOURCE_PROPAGATED, round, tuple(source_point)
        )

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(mask, classes) as H x W arrays; mask marks labeled pixels."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        classes = np.zeros((self.height, self.width), dtype=np.float64)
        for (r, c), e in self._entries.items():
            mask[r, c] = True
            classes[r, c] = e.cls
        return mask, classes

    def point_mask(self) -> np.ndarray:
        """Boolean H x W mask of annotated (seed/queried) pixels only."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        for (r, c), e in self._entries.items():
            if e.source in _POINT_SOURCES:
                mask[r, c] = True
        return mask

    def validate(self):
        points = {(e.row, e.col) for e in self._entries.values()
                  if e.source in _POINT_SOURCES}
        for e in self._entries.values():
            self._check_bounds(e.row, e.col)
            if e.source == SOURCE_PROPAGATED:
                if e.source_point is None or tuple(e.source_point) not in points:
                    raise ValueError(
                        f"propagated label at ({e.row},{e.col}) does not reference "
                        f"an annotated point"
                    )

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "height": self.height,
            "width": self.width,
            "entries": [
                [e.row, e.col, e.cls, e.source, e.round,
                 list(e.source_point) if e.source_point else None]
                for e in self.entries()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparseLabels":
        labels = cls(d["image_id"], d["height"], d["width"])
        for row, col, c, source, rnd, sp in d["entries"]:
            labels._entries[(row, col)] = LabelEntry(
                row, col, c, source, rnd, tuple(sp) if sp else None
            )
        return labels

    def __eq__(self, other):
        return (
            isinstance(other, SparseLabels)
            and self.image_id == other.image_id
            and self.height == other.height
            and self.width == other.width
            and self._entries == other._entries
        )
