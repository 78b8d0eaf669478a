"""Synthetic and CSV-backed class-incremental task streams."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, ParameterError

GENERATORS = ("gaussian_blobs", "two_moons_sequence", "csv_file")
ORDERINGS = ("normal", "reversed", "random")


@dataclass(frozen=True)
class StreamConfig:
    n_tasks: int = 5
    classes_per_task: int = 2
    samples_per_class: int = 500
    feature_dim: int = 16
    generator: str = "gaussian_blobs"
    separation: float = 3.0
    corruption_rate: float = 0.0
    imbalance: float = 1.0  # gamma; 1 means balanced
    imbalance_order: str = "normal"
    batch_size: int = 32
    holdout_fraction: float = 0.2
    csv_path: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ParameterError(f"unknown generator {self.generator!r}")
        if self.n_tasks < 1 or self.classes_per_task < 1:
            raise ParameterError("need at least one task and one class per task")
        if not 0.0 <= self.corruption_rate < 1.0:
            raise ParameterError("corruption_rate must lie in [0, 1)")
        if self.imbalance < 1.0:
            raise ParameterError("imbalance factor gamma must be >= 1")
        if self.imbalance_order not in ORDERINGS:
            raise ParameterError(f"unknown imbalance ordering {self.imbalance_order!r}")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ParameterError("holdout_fraction must lie in (0, 1)")
        if self.generator == "two_moons_sequence" and self.classes_per_task != 2:
            raise ParameterError("two_moons_sequence needs exactly 2 classes per task")
        if self.generator == "csv_file" and not self.csv_path:
            raise ParameterError("csv_file generator needs csv_path")

    @property
    def n_classes(self) -> int:
        return self.n_tasks * self.classes_per_task


@dataclass
class Task:
    task_id: int
    classes: list[int]
    batches: list[tuple[np.ndarray, np.ndarray]]  # (X, one-hot Y)
    clean_labels: np.ndarray  # per streamed row, before corruption
    flipped: np.ndarray  # per streamed row
    X_eval: np.ndarray
    y_eval: np.ndarray  # class indices


@dataclass
class TaskStream:
    config: StreamConfig
    tasks: list[Task] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    def eval_sets(self):
        return [(t.X_eval, t.y_eval) for t in self.tasks]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for t in self.tasks:
            for X, Y in t.batches:
                h.update(np.ascontiguousarray(X).tobytes())
                h.update(np.ascontiguousarray(Y).tobytes())
            h.update(np.ascontiguousarray(t.X_eval).tobytes())
            h.update(np.ascontiguousarray(t.y_eval).tobytes())
        return h.hexdigest()

    def manifest(self) -> dict:
        return {
            "config": asdict(self.config),
            "n_classes": self.n_classes,
            "tasks": [
                {
                    "task_id": t.task_id,
                    "classes": t.classes,
                    "n_batches": len(t.batches),
                    "n_train": int(sum(len(X) for X, _ in t.batches)),
                    "n_eval": int(len(t.y_eval)),
                    "n_flipped": int(t.flipped.sum()),
                }
                for t in self.tasks
            ],
            "sha256": self.fingerprint(),
        }

    def write_manifest(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    Y = np.zeros((labels.size, n_classes))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def class_counts(n_per_class: int, n_classes: int, gamma: float, order: str, rng=None) -> np.ndarray:
    """Per-class sample counts ``floor(N * gamma ** (-rank / (C - 1)))``."""
    if n_classes == 1 or gamma == 1.0:
        return np.full(n_classes, n_per_class, dtype=int)
    ladder = np.floor(n_per_class * gamma ** (-np.arange(n_classes) / (n_classes - 1)) + 1e-9)
    ladder = ladder.astype(int)
    if order == "normal":
        return ladder
    if order == "reversed":
        return ladder[::-1].copy()
    if order == "random":
        return ladder[rng.permutation(n_classes)]
    raise ParameterError(f"unknown imbalance ordering {order!r}")


def corrupt_labels(Y, rate: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Flip each one-hot row with probability ``rate`` to a different class
    chosen uniformly. Returns ``(Y_corrupt, flip_mask)``."""
    Y = np.asarray(Y, dtype=float)
    n, c = Y.shape
    flip = rng.random(n) < rate
    if c < 2:
        return Y.copy(), np.zeros(n, dtype=bool)
    labels = Y.argmax(axis=1)
    shift = rng.integers(1, c, size=n)
    new = np.where(flip, (labels + shift) % c, labels)
    return one_hot(new, c), flip


def _class_means(cfg: StreamConfig, rng) -> np.ndarray:
    dirs = rng.standard_normal((cfg.n_classes, cfg.feature_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return cfg.separation * dirs


def _blobs(cfg, counts, rng):
    means = _class_means(cfg, rng)
    X, y = [], []
    for c, n in enumerate(counts):
        X.append(means[c] + rng.standard_normal((n, cfg.feature_dim)))
        y.append(np.full(n, c))
    return X, y


def _moons(cfg, counts, rng, noise: float = 0.1):
    d = max(cfg.feature_dim, 2)
    offsets = _class_means(StreamConfig(n_tasks=cfg.n_tasks, classes_per_task=1,
                                        feature_dim=d, separation=cfg.separation * 2), rng)
    X, y = [], []
    for c, n in enumerate(counts):
        task, upper = divmod(c, 2)
        theta = rng.uniform(0, np.pi, n)
        if upper == 0:
            pts = np.c_[np.cos(theta), np.sin(theta)]
        else:
            pts = np.c_[1 - np.cos(theta), 0.5 - np.sin(theta)]
        feat = np.zeros((n, d))
        feat[:, :2] = pts + noise * rng.standard_normal((n, 2))
        feat[:, 2:] = noise * rng.standard_normal((n, d - 2))
        X.append(feat + offsets[task])
        y.append(np.full(n, c))
    return X, y


def read_csv_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``f0,...,f{d-1},label`` rows; labels are class indices."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    feats, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        d = len(header) - 1
        expected = [f"f{i}" for i in range(d)] + ["label"]
        if [h.strip() for h in header] != expected:
            raise IngestionError(f"{path}:1: header must be {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise IngestionError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:d]])
                lab = int(row[d])
            except ValueError as e:
                raise IngestionError(f"{path}:{lineno}: {e}") from None
            if lab < 0:
                raise IngestionError(f"{path}:{lineno}: negative label")
            labels.append(lab)
    if not labels:
        raise IngestionError(f"{path}: no data rows")
    return np.asarray(feats), np.asarray(labels)


def _csv_per_class(cfg, rng):
    X_all, y_all = read_csv_dataset(cfg.csv_path)
    n_classes = int(y_all.max()) + 1
    if n_classes != cfg.n_classes:
        raise IngestionError(
            f"{cfg.csv_path}: found {n_classes} classes, config expects {cfg.n_classes}"
        )
    X, y = [], []
    for c in range(n_classes):
        rows = np.flatnonzero(y_all == c)
        X.append(X_all[rows[rng.permutation(rows.size)]])
        y.append(np.full(rows.size, c))
    return X, y


def make_stream(cfg: StreamConfig, rng: np.random.Generator | None = None) -> TaskStream:
    """Build the single-pass stream; deterministic in ``cfg.seed`` (or ``rng``)."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    counts = class_counts(cfg.samples_per_class, cfg.n_classes, cfg.imbalance,
                          cfg.imbalance_order, rng)
    if cfg.generator == "gaussian_blobs":
        X_by, y_by = _blobs(cfg, counts, rng)
    elif cfg.generator == "two_moons_sequence":
        X_by, y_by = _moons(cfg, counts, rng)
    else:
        X_by, y_by = _csv_per_class(cfg, rng)

    stream = TaskStream(cfg)
    for t in range(cfg.n_tasks):
        classes = list(range(t * cfg.classes_per_task, (t + 1) * cfg.classes_per_task))
        tr_X, tr_y, ev_X, ev_y = [], [], [], []
        for c in classes:
            Xc, yc = X_by[c], y_by[c]
            n_eval = int(round(cfg.holdout_fraction * len(yc)))
            ev_X.append(Xc[:n_eval])
            ev_y.append(yc[:n_eval])
            tr_X.append(Xc[n_eval:])
            tr_y.append(yc[n_eval:])
        Xtr = np.concatenate(tr_X)
        ytr = np.concatenate(tr_y)
        order = rng.permutation(len(ytr))
        Xtr, ytr = Xtr[order], ytr[order]
        Ytr, flipped = corrupt_labels(one_hot(ytr, cfg.n_classes), cfg.corruption_rate, rng)
        bs = cfg.batch_size
        batches = [(Xtr[i:i + bs], Ytr[i:i + bs]) for i in range(0, len(ytr), bs)]
        stream.tasks.append(
            Task(t, classes, batches, ytr, flipped, np.concatenate(ev_X), np.concatenate(ev_y))
        )
    return stream
