"""Discretised Brownian bridges between paired endpoints.

A bridge from ``x0`` to ``x1`` on ``[0, T]`` with ``k`` steps is built from a
Brownian motion started at ``x0``::

    W_j  = x0 + sum_{i<j} sigma_i * sqrt(dt) * Z_i
    BB_j = W_j - (t_j / T) * (W_k - x1)

which is evaluated in the algebraically equivalent form

    BB_j = (1 - s_j) x0 + s_j x1 + sqrt(dt) * (S_j - s_j S_k),   s_j = t_j / T

with ``S_j`` the running sum of ``sigma_i Z_i``. Written this way a zero
diffusion gives exactly the straight (mixup) segment and both endpoints are
reproduced bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

PAIRINGS = ("random_shuffle", "euclidean_sorted", "identity")
VARIANCES = ("constant", "tempering")


@dataclass(frozen=True)
class BridgeSpec:
    k: int = 4
    sigma_x: float = 0.03
    sigma_y: float = 0.01
    T: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"bridge needs k >= 1 steps, got {self.k}")
        if self.sigma_x < 0 or self.sigma_y < 0:
            raise ParameterError("diffusion coefficients must be non-negative")
        if not self.T > 0:
            raise ParameterError("terminal time must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.k

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.k + 1)


@dataclass
class BridgePath:
    times: np.ndarray  # (k+1,)
    xs: np.ndarray  # (k+1, d)
    ys: np.ndarray  # (k+1, c)


def _bridge_rows(x0, x1, sigma, spec: BridgeSpec, noise) -> np.ndarray:
    """Bridge(s) given pre-drawn standard normal ``noise``.

    ``x0``/``x1`` have shape (..., d); ``noise`` has shape (..., k, d);
    ``sigma`` is a scalar or broadcasts against (..., k, 1). Returns
    (..., k+1, d).
    """
    s = spec.times() / spec.T
    s_col = s[:, None]
    lin = (1.0 - s_col) * x0[..., None, :] + s_col * x1[..., None, :]
    steps = np.asarray(sigma, dtype=float) * noise
    steps = np.broadcast_to(steps, lin.shape[:-2] + steps.shape[-2:])
    S = np.zeros(lin.shape)
    np.cumsum(steps, axis=-2, out=S[..., 1:, :])
    fluct = np.sqrt(spec.dt) * (S - s_col * S[..., -1:, :])
    out = lin + fluct
    out[..., 0, :] = x0
    out[..., -1, :] = x1
    return out


def sample_bridge(x0, x1, sigma, spec: BridgeSpec, rng: np.random.Generator) -> np.ndarray:
    """One bridge path from ``x0`` to ``x1``; returns a (k+1, d) array.

    ``sigma`` may be a scalar or a length-k array of per-step coefficients.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x0.shape != x1.shape or x0.ndim != 1:
        raise ShapeError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    sig = np.asarray(sigma, dtype=float)
    if sig.ndim == 1:
        if sig.shape[0] != spec.k:
            raise ShapeError("per-step sigma must have k entries")
        sig = sig[:, None]
    noise = rng.standard_normal((spec.k, x0.shape[0]))
    return _bridge_rows(x0, x1, sig, spec, noise)


def pair_permutation(X, pairing: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Permutation giving the terminal row for each starting row."""
    n = len(X)
    if pairing == "random_shuffle":
        return rng.permutation(n)
    if pairing == "identity":
        return np.arange(n)
    if pairing == "euclidean_sorted":
        # rank rows by distance to the batch centroid; the i-th closest row is
        # paired with the i-th farthest
        X = np.asarray(X, dtype=float)
        dist = np.linalg.norm(X - X.mean(axis=0), axis=1)
        order = np.argsort(dist, kind="stable")
        perm = np.empty(n, dtype=int)
        perm[order] = order[::-1]
        return perm
    raise ParameterError(f"unknown pairing {pairing!r}")


def tempering_sigmas(base: float, g_start, g_end, spec: BridgeSpec) -> np.ndarray:
    """Per-step diffusion for each pair, shape (n, k).

    The endpoint gradient norms are linearly interpolated over left-point
    step times. Callers pass norms already divided by their batch mean.
    """
    t = spec.times()[:-1] / spec.T
    g_start = np.asarray(g_start, dtype=float)[:, None]
    g_end = np.asarray(g_end, dtype=float)[:, None]
    return base * ((1.0 - t) * g_start + t * g_end)


def sample_paired_bridges(
    X,
    Y,
    spec: BridgeSpec,
    rng: np.random.Generator,
    pairing: str = "random_shuffle",
    variance: str = "constant",
    grad_norms=None,
    shared_noise: bool = False,
    perm=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint feature/label bridges for every row of a batch.

    Returns ``(xs, ys, perm)`` with ``xs`` (n, k+1, d), ``ys`` (n, k+1, c) and
    the pairing permutation. With ``shared_noise`` a single noise draw is
    reused by every pair in the batch.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ShapeError("X and Y must be 2-D with equal row counts")
    if variance not in VARIANCES:
        raise ParameterError(f"unknown variance strategy {variance!r}")
    n = len(X)
    if perm is None:
        perm = pair_permutation(X, pairing, rng)

    if variance == "tempering":
        if grad_norms is None:
            raise ParameterError("tempering needs per-row input-gradient norms")
        g = np.asarray(grad_norms, dtype=float)
        if g.shape != (n,):
            raise ShapeError("grad_norms must have one entry per row")
        mean = g.mean()
        g = g / mean if mean > 0 else np.ones(n)
        rel = tempering_sigmas(1.0, g, g[perm], spec)[:, :, None]
        sx, sy = spec.sigma_x * rel, spec.sigma_y * rel
    else:
        sx, sy = spec.sigma_x, spec.sigma_y

    lead = (1,) if shared_noise else (n,)
    zx = rng.standard_normal(lead + (spec.k, X.shape[1]))
    zy = rng.standard_normal(lead + (spec.k, Y.shape[1]))
    xs = _bridge_rows(X, X[perm], sx, spec, zx)
    ys = _bridge_rows(Y, Y[perm], sy, spec, zy)
    return xs, ys, perm


def as_paths(xs, ys, spec: BridgeSpec) -> list[BridgePath]:
    t = spec.times()
    return [BridgePath(t, x, y) for x, y in zip(xs, ys)]
