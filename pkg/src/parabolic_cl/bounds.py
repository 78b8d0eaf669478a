"""Empirical checks of the forgetting and generalisation bounds.

The loss profile at a checkpoint is estimated by mean per-sample losses over
a sample set; the memory buffer stands in for the boundary of the domain.
Every check is a pure function of the stored run record (and, for the
Lipschitz estimate, the stored network and buffer snapshot).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .net import DenseNetwork, per_sample_loss


@dataclass
class ForgettingRow:
    seed: int
    checkpoint: int
    max_buffer_loss: float
    avg_buffer_loss: float
    earlier_task_loss: float
    margin_max: float
    margin_avg: float
    holds_max: bool
    holds_avg: bool


@dataclass
class GeneralizationRow:
    seed: int
    checkpoint: int
    last_task_loss: float
    min_buffer_loss: float
    max_buffer_loss: float
    lipschitz: float
    tau: int
    lower_margin: float
    upper_margin: float
    holds_lower: bool
    holds_upper: bool


def _checkpoints(record: dict):
    return [c for c in record.get("checkpoints", []) if c["buffer_losses"]]


def check_forgetting(record: dict, earlier_task: int = 0) -> list[ForgettingRow]:
    """Buffer loss (max and mean) against the loss on an earlier task."""
    rows = []
    for c in _checkpoints(record):
        bl = np.asarray(c["buffer_losses"])
        early = float(c["task_losses"][earlier_task])
        mx, av = float(bl.max()), float(bl.mean())
        rows.append(ForgettingRow(record["seed"], c["task"], mx, av, early,
                                  mx - early, av - early, mx >= early, av >= early))
    return rows


def check_generalization(record: dict, lipschitz=None, last_task: int | None = None) -> list[GeneralizationRow]:
    """Lower and upper bracket of the last task's loss by buffer losses.

    ``lipschitz`` maps checkpoint index to a Lipschitz estimate (missing
    entries count as 0, which makes the upper check strictest).
    """
    lipschitz = lipschitz or {}
    rows = []
    for c in _checkpoints(record):
        tl = c["task_losses"]
        last = len(tl) - 1 if last_task is None else last_task
        bl = np.asarray(c["buffer_losses"])
        loss = float(tl[last])
        C = float(lipschitz.get(c["task"], 0.0))
        tau = max(last - c["task"], 0)
        lo, hi = float(bl.min()), float(bl.max())
        upper = C * tau + hi
        rows.append(GeneralizationRow(record["seed"], c["task"], loss, lo, hi, C, tau,
                                      loss - lo, upper - loss, loss >= lo, loss <= upper))
    return rows


def lipschitz_estimate(net: DenseNetwork, X, Y, rng: np.random.Generator,
                       n_pairs: int = 1000, delta: float = 1e-3) -> float:
    """Largest finite-difference slope of the loss inside the buffer hull.

    Points and directions are drawn from segments between random buffer rows
    in the joint (feature, label) space.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = np.hstack([X, Y])
    n, d = len(Z), X.shape[1]
    i, j, k, l = (rng.integers(n, size=n_pairs) for _ in range(4))
    u = rng.random((n_pairs, 1))
    v = rng.random((n_pairs, 1))
    a = (1 - u) * Z[i] + u * Z[j]
    b = (1 - v) * Z[k] + v * Z[l]
    step = delta * (b - a)
    dist = np.linalg.norm(step, axis=1)
    ok = dist > 0
    if not ok.any():
        return 0.0
    a, step, dist = a[ok], step[ok], dist[ok]
    la = per_sample_loss(net, a[:, :d], a[:, d:])
    lb = per_sample_loss(net, a[:, :d] + step[:, :d], a[:, d:] + step[:, d:])
    return float(np.max(np.abs(lb - la) / dist))


def pattern_summary(forgetting, generalization) -> dict:
    """Per-run flags: does each inequality hold at every checkpoint."""
    return {
        "forgetting_max_all": all(r.holds_max for r in forgetting),
        "forgetting_avg_all": all(r.holds_avg for r in forgetting),
        "generalization_lower_all": all(r.holds_lower for r in generalization),
        "generalization_upper_all": all(r.holds_upper for r in generalization),
    }


def rows_as_dicts(rows) -> list[dict]:
    return [asdict(r) for r in rows]
