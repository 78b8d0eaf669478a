"""Bridge-integrated training loss and Girsanov path weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bridge as bb
from .buffer import ReservoirBuffer, sample_batch
from .errors import ParameterError, ShapeError, TrainingError
from .net import DenseNetwork, backward, forward, input_grad_norms, soft_cross_entropy_rows

LOG_WEIGHT_CLAMP = 30.0


@dataclass(frozen=True)
class DriftDescriptor:
    """Drift ``mu(x) = (x - center) / scale**2``, the gradient of a quadratic."""

    kind: str = "none"
    center: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_prior"):
            raise ParameterError(f"unknown drift kind {self.kind!r}")
        if self.kind != "none" and not self.scale > 0:
            raise ParameterError("drift scale must be positive")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def mu(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.active:
            return np.zeros_like(x)
        return (x - np.asarray(self.center, dtype=float)) / self.scale**2


@dataclass(frozen=True)
class PclConfig:
    bridge: bb.BridgeSpec = field(default_factory=bb.BridgeSpec)
    buffer_batch: int = 32
    pairing: str = "random_shuffle"
    variance: str = "constant"
    include_endpoints: bool = True
    n_paths: int = 1
    shared_noise: bool = False
    drift: DriftDescriptor = field(default_factory=DriftDescriptor)

    def __post_init__(self):
        if self.buffer_batch < 0:
            raise ParameterError("buffer_batch must be >= 0")
        if self.n_paths < 1:
            raise ParameterError("n_paths must be >= 1")
        if self.pairing not in bb.PAIRINGS:
            raise ParameterError(f"unknown pairing {self.pairing!r}")
        if self.variance not in bb.VARIANCES:
            raise ParameterError(f"unknown variance strategy {self.variance!r}")


def girsanov_log_weights(xs, times, drift: DriftDescriptor, sigma: float = 1.0) -> np.ndarray:
    """Ito (left-point) log Radon-Nikodym weight for a stack of paths.

    ``xs`` is (..., k+1, d). ``sigma`` is the diffusion of the reference
    measure; the unit case gives ``sum mu.dX - 0.5 sum |mu|^2 dt``.
    """
    xs = np.asarray(xs, dtype=float)
    dt = np.diff(np.asarray(times, dtype=float))
    mu = drift.mu(xs[..., :-1, :])
    dx = np.diff(xs, axis=-2)
    s2 = sigma * sigma
    stoch = (mu * dx).sum(axis=(-1, -2)) / s2
    quad = 0.5 * ((mu * mu).sum(axis=-1) * dt).sum(axis=-1) / s2
    return stoch - quad


def _clamped_exp(logw, diagnostics):
    logw = np.asarray(logw, dtype=float)
    over = logw > LOG_WEIGHT_CLAMP
    if diagnostics is not None and np.any(over):
        diagnostics["girsanov_clamped"] = diagnostics.get("girsanov_clamped", 0) + int(over.sum())
    return np.exp(np.minimum(logw, LOG_WEIGHT_CLAMP))


def girsanov_weight(path: bb.BridgePath, drift: DriftDescriptor, diagnostics: dict | None = None) -> float:
    if not drift.active:
        raise ParameterError("girsanov_weight needs an active drift")
    logw = girsanov_log_weights(path.xs, path.times, drift)
    return float(_clamped_exp(logw, diagnostics))


def time_weights(spec: bb.BridgeSpec, include_endpoints: bool) -> np.ndarray:
    """Quadrature weights over the k+1 bridge points: left Riemann sum plus
    an optional unit-weight terminal evaluation."""
    w = np.full(spec.k + 1, spec.dt)
    w[-1] = 1.0 if include_endpoints else 0.0
    return w


def pcl_loss(
    net: DenseNetwork,
    X,
    Y,
    buf: ReservoirBuffer | None,
    cfg: PclConfig,
    rng: np.random.Generator,
    buffer_rng: np.random.Generator | None = None,
    diagnostics: dict | None = None,
):
    """Loss integrated along Brownian bridges joining the batch (plus a
    replayed buffer batch) to a shuffled copy of itself.

    ``rng`` drives pairing and bridge noise; ``buffer_rng`` (defaults to
    ``rng``) drives the replay draw. Returns ``(loss, param_grads)``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeError("X and Y must be aligned 2-D arrays")
    if X.shape[1] != net.in_dim:
        raise ShapeError(f"net expects {net.in_dim} features, got {X.shape[1]}")
    if buf is not None and buf and cfg.buffer_batch > 0:
        XM, YM = sample_batch(buf, cfg.buffer_batch, buffer_rng if buffer_rng is not None else rng)
        X = np.concatenate([X, XM])
        Y = np.concatenate([Y, YM])

    spec = cfg.bridge
    n = len(X)
    perm = bb.pair_permutation(X, cfg.pairing, rng)
    grad_norms = input_grad_norms(net, X, Y) if cfg.variance == "tempering" else None

    xs_all, ys_all = [], []
    for _ in range(cfg.n_paths):
        xs, ys, _ = bb.sample_paired_bridges(
            X, Y, spec, rng,
            variance=cfg.variance, grad_norms=grad_norms,
            shared_noise=cfg.shared_noise, perm=perm,
        )
        xs_all.append(xs)
        ys_all.append(ys)
    xs = np.stack(xs_all)  # (P, n, k+1, d)
    ys = np.stack(ys_all)

    if cfg.drift.active:
        w = _clamped_exp(girsanov_log_weights(xs, spec.times(), cfg.drift), diagnostics)
        w = w / w.mean()  # self-normalised
    else:
        w = np.ones(xs.shape[:2])

    coef = w[..., None] * time_weights(spec, cfg.include_endpoints) / (cfg.n_paths * n)
    keep = coef.reshape(-1) != 0.0
    flat_x = xs.reshape(-1, xs.shape[-1])[keep]
    flat_y = ys.reshape(-1, ys.shape[-1])[keep]
    a = coef.reshape(-1)[keep]

    logits, cache = forward(net, flat_x)
    losses, g = soft_cross_entropy_rows(logits, flat_y)
    loss = float(a @ losses)
    if not np.isfinite(loss):
        raise TrainingError("non-finite parabolic loss")
    grads, _ = backward(net, cache, a[:, None] * g)
    return loss, grads
