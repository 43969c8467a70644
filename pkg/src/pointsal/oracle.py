"""Label sources: the simulated ground-truth annotator and the query/answer
records shared with the external annotation path.

Queries and answers are serialized as line-delimited JSON, one object per
line, in the experiment directory; the HTTP annotation service ships the
same records over the wire.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .labels import BACKGROUND, SALIENT
from .seeding import rng_for

CLASS_NAMES = {SALIENT: "salient", BACKGROUND: "background"}
CLASS_IDS = {v: k for k, v in CLASS_NAMES.items()}


@dataclass
class LabelQuery:
    query_id: str
    image_id: str
    row: int
    col: int
    round: int
    superpixel_id: int
    status: str = "pending"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LabelAnswer:
    query_id: str
    cls: int
    source: str  # gt_oracle | human

    def to_dict(self):
        return {"query_id": self.query_id, "class": CLASS_NAMES[self.cls],
                "source": self.source}

    @classmethod
    def from_dict(cls, d):
        return cls(d["query_id"], CLASS_IDS[d["class"]], d["source"])


def gt_answer(mask: np.ndarray, query: LabelQuery) -> LabelAnswer:
    """Classify the queried pixel straight off the ground-truth mask."""
    h, w = mask.shape
    if not (0 <= query.row < h and 0 <= query.col < w):
        raise ValueError(f"query {query.query_id} at ({query.row},{query.col}) "
                         f"outside {h}x{w} mask")
    cls = SALIENT if mask[query.row, query.col] else BACKGROUND
    return LabelAnswer(query.query_id, cls, "gt_oracle")


def initial_points(image_id: str, seed: int, n: int, height: int,
                   width: int) -> list[tuple[int, int]]:
    """n distinct uniform-random pixels, deterministic per (seed, image_id)."""
    if n > height * width:
        raise ValueError(f"cannot place {n} distinct points on {height}x{width}")
    if n == 0:
        return []
    rng = rng_for(seed, "initial-points", image_id)
    flat = rng.choice(height * width, size=n, replace=False)
    return [(int(ix // width), int(ix % width)) for ix in flat]


def append_records(path, records):
    """Durably append JSONL records (flushed before returning)."""
    path = Path(path)
    with open(path, "a") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        fh.flush()


def read_answers(path) -> list[LabelAnswer]:
    path = Path(path)
    if not path.exists():
        return []
    return [LabelAnswer.from_dict(json.loads(line))
            for line in path.read_text().splitlines() if line.strip()]
