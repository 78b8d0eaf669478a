"""Fixed-capacity replay memory filled by reservoir sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError

FILTERS = ("none", "max_loss", "min_loss", "middle_loss")


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: np.ndarray
    task_id: int = 0
    stream_index: int = 0

    def __post_init__(self):
        # stored samples are never mutated
        f = np.array(self.features, dtype=float)
        y = np.array(self.label, dtype=float)
        f.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "label", y)

    def to_dict(self) -> dict:
        return {
            "features": self.features.tolist(),
            "label": self.label.tolist(),
            "task_id": int(self.task_id),
            "stream_index": int(self.stream_index),
        }


@dataclass
class ReservoirBuffer:
    capacity: int
    filter: str = "none"
    items: list[Sample] = field(default_factory=list)
    n_seen: int = 0

    def __post_init__(self):
        if self.capacity < 0:
            raise ParameterError("capacity must be non-negative")
        if self.filter not in FILTERS:
            raise ParameterError(f"unknown buffer filter {self.filter!r}")

    def __len__(self) -> int:
        return len(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([s.features for s in self.items])
        Y = np.stack([s.label for s in self.items])
        return X, Y


def _check_dims(buf: ReservoirBuffer, sample: Sample):
    if buf.items:
        ref = buf.items[0]
        if sample.features.shape != ref.features.shape or sample.label.shape != ref.label.shape:
            raise ShapeError("sample dimensions do not match buffer contents")


def maybe_insert(buf: ReservoirBuffer, sample: Sample, rng: np.random.Generator) -> bool:
    """Algorithm R step. Returns True when the sample was stored."""
    _check_dims(buf, sample)
    buf.n_seen += 1
    if len(buf.items) < buf.capacity:
        buf.items.append(sample)
        return True
    if buf.capacity == 0:
        return False
    j = int(rng.integers(buf.n_seen))
    if j < buf.capacity:
        buf.items[j] = sample
        return True
    return False


def select_by_loss(losses, how: str) -> np.ndarray:
    """Indices of a batch admitted by a loss filter, in batch order."""
    losses = np.asarray(losses, dtype=float)
    n = len(losses)
    if n == 0:
        return np.arange(0)
    if how == "none":
        return np.arange(n)
    if how == "max_loss":
        return np.array([int(np.argmax(losses))])
    if how == "min_loss":
        return np.array([int(np.argmin(losses))])
    if how == "middle_loss":
        q = n // 4
        order = np.argsort(losses, kind="stable")
        return np.sort(order[q : n - q])
    raise ParameterError(f"unknown buffer filter {how!r}")


def filtered_insert(buf: ReservoirBuffer, batch, losses, rng: np.random.Generator) -> list[int]:
    """Offer the rows admitted by ``buf.filter`` to the reservoir."""
    if len(batch) == 0:
        return []
    if losses is None:
        if buf.filter != "none":
            raise ParameterError(f"filter {buf.filter!r} needs per-row losses")
        losses = np.zeros(len(batch))
    if len(losses) != len(batch):
        raise ShapeError("one loss per batch row required")
    chosen = select_by_loss(losses, buf.filter)
    for i in chosen:
        maybe_insert(buf, batch[i], rng)
    return [int(i) for i in chosen]


def sample_batch(buf: ReservoirBuffer, m: int, rng: np.random.Generator):
    """Draw ``m`` buffer rows (with replacement only if ``m`` exceeds the fill)."""
    if not buf.items:
        raise ValueError("cannot sample from an empty buffer")
    n = len(buf.items)
    idx = rng.choice(n, size=m, replace=m > n)
    X = np.stack([buf.items[i].features for i in idx])
    Y = np.stack([buf.items[i].label for i in idx])
    return X, Y


def export_jsonl(buf: ReservoirBuffer, path) -> None:
    with open(path, "w") as fh:
        for s in buf.items:
            fh.write(json.dumps(s.to_dict()) + "\n")


def load_jsonl(path) -> list[Sample]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(Sample(d["features"], d["label"], d["task_id"], d["stream_index"]))
    return out
