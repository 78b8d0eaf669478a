"""Online class-incremental training loop for PCL and the ER / SGD baselines."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .buffer import ReservoirBuffer, Sample, filtered_insert, sample_batch
from .errors import ParameterError, TrainingError
from .loss import PclConfig, pcl_loss
from .net import (
    DenseNetwork,
    backward,
    forward,
    init_network,
    per_sample_loss,
    sgd_step,
    soft_cross_entropy,
)
from .streams import StreamConfig, TaskStream, make_stream, one_hot

METHODS = ("pcl", "er", "sgd")


@dataclass(frozen=True)
class RunConfig:
    method: str = "pcl"
    stream: StreamConfig = field(default_factory=StreamConfig)
    pcl: PclConfig = field(default_factory=PclConfig)
    hidden: tuple = (64,)
    lr: float = 0.08
    buffer_capacity: int = 200
    buffer_batch: int = 32
    buffer_filter: str = "none"
    eval_every: int = 0  # batches between extra evaluations; 0 = task ends only
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        if not self.lr > 0:
            raise ParameterError("lr must be positive")
        if self.buffer_capacity < 0 or self.buffer_batch < 0:
            raise ParameterError("buffer sizes must be non-negative")


@dataclass
class Checkpoint:
    task: int
    buffer_losses: list[float]
    task_losses: list[float]  # mean eval loss for every task, trained or not
    net: dict
    buffer: list[dict]


@dataclass
class RunRecord:
    seed: int
    method: str
    acc_matrix: list[list[float]]
    aa: list[float]
    aaa: float
    acc_final: float
    loss_trace: list[float]
    buffer_loss_trace: list[float]
    anytime: list[dict]
    status: str = "ok"
    message: str = ""
    diagnostics: dict = field(default_factory=dict)
    checkpoints: list[Checkpoint] = field(default_factory=list)
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        """JSON-ready summary; network and buffer snapshots are left out and
        wall-clock time is dropped so reruns serialise identically."""
        d = asdict(self)
        d.pop("wall_clock")
        d["checkpoints"] = [
            {"task": c.task, "buffer_losses": c.buffer_losses, "task_losses": c.task_losses}
            for c in self.checkpoints
        ]
        return d


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for init, replay/reservoir and bridge noise."""
    names = ("init", "buffer", "bridge")
    kids = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, kids)}


def evaluate(net: DenseNetwork, eval_sets, n_seen: int | None = None) -> dict:
    """Argmax accuracy per class group over the first ``n_seen`` groups."""
    sets = eval_sets if n_seen is None else eval_sets[:n_seen]
    per_group, correct, total = [], 0, 0
    for X, y in sets:
        logits, _ = forward(net, X)
        hits = int((logits.argmax(axis=1) == y).sum())
        per_group.append(hits / len(y))
        correct += hits
        total += len(y)
    return {"per_group": per_group, "overall": correct / total if total else float("nan")}


def ce_grads(net, X, Y):
    logits, cache = forward(net, X)
    loss, g = soft_cross_entropy(logits, Y)
    grads, _ = backward(net, cache, g)
    return loss, grads


def method_step(cfg: RunConfig, net, X, Y, buf, rngs, pcl_cfg, diagnostics):
    if cfg.method == "sgd":
        return ce_grads(net, X, Y)
    if cfg.method == "er":
        if buf and cfg.buffer_batch > 0:
            XM, YM = sample_batch(buf, cfg.buffer_batch, rngs["buffer"])
            X = np.concatenate([X, XM])
            Y = np.concatenate([Y, YM])
        return ce_grads(net, X, Y)
    return pcl_loss(net, X, Y, buf, pcl_cfg, rngs["bridge"], rngs["buffer"], diagnostics)


def _checkpoint(task, net, buf, stream, n_classes):
    if buf:
        bX, bY = buf.arrays()
        bl = per_sample_loss(net, bX, bY).tolist()
    else:
        bl = []
    tl = [float(per_sample_loss(net, t.X_eval, one_hot(t.y_eval, n_classes)).mean())
          for t in stream.tasks]
    return Checkpoint(task, bl, tl, net.to_dict(), [s.to_dict() for s in buf.items])


def run(cfg: RunConfig, stream: TaskStream | None = None, on_step=None) -> RunRecord:
    """Train once over the stream and evaluate after every task.

    ``on_step(step, net)``, when given, is called after every parameter update.
    """
    t0 = time.perf_counter()
    if stream is None:
        stream = make_stream(replace(cfg.stream, seed=cfg.seed))
    n_classes = stream.n_classes
    d = stream.tasks[0].batches[0][0].shape[1]
    rngs = rng_streams(cfg.seed)
    net = init_network([d, *cfg.hidden, n_classes], rngs["init"])
    buf = ReservoirBuffer(cfg.buffer_capacity, cfg.buffer_filter)
    pcl_cfg = replace(cfg.pcl, buffer_batch=cfg.buffer_batch)
    eval_sets = stream.eval_sets()

    rec = RunRecord(cfg.seed, cfg.method, [], [], float("nan"), float("nan"), [], [], [])
    stream_index = 0
    step = 0
    try:
        for task in stream.tasks:
            for X, Y in task.batches:
                losses = None
                if cfg.method != "sgd" and buf.filter != "none":
                    losses = per_sample_loss(net, X, Y)
                loss, grads = method_step(cfg, net, X, Y, buf, rngs, pcl_cfg, rec.diagnostics)
                if not np.isfinite(loss):
                    raise TrainingError("non-finite loss")
                sgd_step(net, grads, cfg.lr)
                rec.loss_trace.append(loss)
                if cfg.method != "sgd":
                    batch = [Sample(x, y, task.task_id, stream_index + i)
                             for i, (x, y) in enumerate(zip(X, Y))]
                    filtered_insert(buf, batch, losses, rngs["buffer"])
                stream_index += len(X)
                step += 1
                if on_step is not None:
                    on_step(step, net)
                if cfg.eval_every and step % cfg.eval_every == 0:
                    ev = evaluate(net, eval_sets, task.task_id + 1)
                    rec.anytime.append({"step": step, "task": task.task_id, "acc": ev["overall"]})
            ev = evaluate(net, eval_sets, task.task_id + 1)
            rec.acc_matrix.append(ev["per_group"])
            rec.aa.append(ev["overall"])
            ck = _checkpoint(task.task_id, net, buf, stream, n_classes)
            rec.checkpoints.append(ck)
            rec.buffer_loss_trace.append(float(np.mean(ck.buffer_losses)) if ck.buffer_losses else float("nan"))
    except TrainingError as e:
        rec.status = "diverged"
        rec.message = str(e)
    if rec.aa:
        rec.aaa = float(np.mean(rec.aa))
        rec.acc_final = rec.aa[-1] if rec.status == "ok" else float("nan")
    rec.wall_clock = time.perf_counter() - t0
    return rec
