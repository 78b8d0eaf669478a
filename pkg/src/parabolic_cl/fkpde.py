"""Finite-difference and Feynman-Kac solvers for the loss-profile PDE.

Both solvers use the generator ``(sigma**2 / 2) * laplacian + mu . grad``,
which is the generator of ``dX = mu dt + sigma dW``. The boundary set is a
union of balls ``{x : |x - c|^2 <= epsilon}`` on which the solution is pinned
to the source (the loss). The FD solver works on a 1-D grid; the Monte Carlo
estimator runs in any dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .loss import DriftDescriptor, girsanov_log_weights

NO_DRIFT = DriftDescriptor()


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError("grid needs lo < hi")
        if self.n < 3:
            raise ParameterError("grid needs at least 3 interior nodes")

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n + 1)

    def nodes(self) -> np.ndarray:
        """All n+2 nodes, domain ends included."""
        return self.lo + self.dx * np.arange(self.n + 2)


@dataclass(frozen=True)
class BoundarySet:
    centers: np.ndarray
    epsilon: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.size == 0:
            raise ParameterError("boundary set needs at least one center")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        object.__setattr__(self, "centers", c)

    def contains(self, X) -> np.ndarray:
        """Membership for points of shape (N,) in 1-D or (N, d)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        d2 = ((X[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=-1)
        return (d2 <= self.epsilon).any(axis=1)


@dataclass
class FkEstimate:
    value: float
    stderr: float
    n_paths: int
    mean_hitting_time: float


def _eval(fn, X):
    """Call ``fn`` on (N, d) points, passing (N,) in the 1-D case."""
    out = fn(X[:, 0] if X.shape[1] == 1 else X)
    return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()


def stable_dt(grid: Grid1D, sigma: float, drift: DriftDescriptor = NO_DRIFT) -> float:
    """Largest explicit step keeping the update a convex combination."""
    D = 0.5 * sigma * sigma
    mu_max = float(np.abs(drift.mu(grid.nodes()[:, None])).max()) if drift.active else 0.0
    rate = 2.0 * D / grid.dx**2 + mu_max / grid.dx
    return np.inf if rate == 0 else 1.0 / rate


def solve_fd(
    grid: Grid1D,
    sigma: float,
    source,
    boundary: BoundarySet | None,
    t_final: float,
    dt: float,
    drift: DriftDescriptor = NO_DRIFT,
    initial=None,
    boundary_value=None,
    backward: bool = False,
    keep_series: bool = False,
):
    """Explicit-Euler march of ``u_t = (sigma^2/2) u_xx + mu u_x + source``.

    ``initial`` and ``boundary_value`` default to ``source``; the domain ends
    and every node inside ``boundary`` are pinned to ``boundary_value``.
    ``backward=True`` marches the time-reversed forgetting form
    ``u_s = (sigma^2/2) u_xx - source`` from terminal data instead. The drift
    term is upwinded.

    Returns u on all ``grid.nodes()`` at ``t_final``, or ``(u, series)`` when
    ``keep_series`` is set (series has one row per time level).
    """
    if dt <= 0 or t_final < 0:
        raise ParameterError("need dt > 0 and t_final >= 0")
    limit = stable_dt(grid, sigma, drift)
    if dt > limit * (1 + 1e-12):
        raise ParameterError(f"dt={dt:g} violates explicit stability limit {limit:g}")
    x = grid.nodes()
    n_steps = int(np.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    step = t_final / n_steps if n_steps else 0.0

    f = np.asarray(source(x), dtype=float) * np.ones_like(x)
    u = np.asarray((initial or source)(x), dtype=float) * np.ones_like(x)
    g = np.asarray((boundary_value or source)(x), dtype=float) * np.ones_like(x)
    pinned = np.zeros(x.shape, dtype=bool)
    pinned[[0, -1]] = True
    if boundary is not None:
        pinned |= boundary.contains(x)
    u = u.copy()
    u[pinned] = g[pinned]

    D = 0.5 * sigma * sigma
    dx = grid.dx
    sign = -1.0 if backward else 1.0
    mu = drift.mu(x[:, None])[:, 0] if drift.active else None
    series = [u.copy()] if keep_series else None
    for _ in range(n_steps):
        lap = np.zeros_like(u)
        lap[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
        rhs = D * lap + sign * f
        if mu is not None:
            fwd = np.zeros_like(u)
            bwd = np.zeros_like(u)
            fwd[1:-1] = (u[2:] - u[1:-1]) / dx
            bwd[1:-1] = (u[1:-1] - u[:-2]) / dx
            rhs += np.where(mu > 0, mu * fwd, mu * bwd)
        u = u + step * rhs
        u[pinned] = g[pinned]
        if keep_series:
            series.append(u.copy())
    if keep_series:
        return u, np.array(series)
    return u


def estimate_fk(
    x0,
    t: float,
    sigma: float,
    source,
    boundary: BoundarySet | None,
    n_paths: int,
    dt: float,
    rng: np.random.Generator,
    drift: DriftDescriptor = NO_DRIFT,
    mode: str = "direct",
    domain: tuple | None = None,
) -> FkEstimate:
    """Monte Carlo value of ``E[source(X_stop) + int_0^stop source(X_s) ds]``.

    Paths follow Euler-Maruyama and stop at the first grid time they land in
    ``boundary`` (or leave ``domain``), else at ``t``. With ``mode="girsanov"``
    the paths are simulated without drift and each functional is reweighted
    by the Radon-Nikodym derivative of the drifted law.
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    if mode not in ("direct", "girsanov"):
        raise ParameterError(f"unknown mode {mode!r}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.shape[0]
    start = x0[None, :]
    if boundary is not None and boundary.contains(start)[0]:
        return FkEstimate(float(_eval(source, start)[0]), 0.0, n_paths, 0.0)

    X = np.repeat(start, n_paths, axis=0)
    integral = np.zeros(n_paths)
    logw = np.zeros(n_paths)
    stop_time = np.full(n_paths, float(t))
    alive = np.ones(n_paths, dtype=bool)
    n_steps = int(np.ceil(t / dt - 1e-9))
    h = t / n_steps if n_steps else 0.0
    sq = np.sqrt(h)
    s2 = sigma * sigma
    for j in range(n_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Xa = X[idx]
        integral[idx] += _eval(source, Xa) * h
        dX = sigma * sq * rng.standard_normal((idx.size, d))
        if drift.active:
            mu = drift.mu(Xa)
            if mode == "direct":
                dX = dX + mu * h
            else:
                logw[idx] += (mu * dX).sum(axis=1) / s2 - 0.5 * (mu * mu).sum(axis=1) * h / s2
        Xa = Xa + dX
        X[idx] = Xa
        hit = np.zeros(idx.size, dtype=bool)
        if boundary is not None:
            hit |= boundary.contains(Xa)
        if domain is not None:
            hit |= ((Xa < domain[0]) | (Xa > domain[1])).any(axis=1)
        stop_time[idx[hit]] = (j + 1) * h
        alive[idx[hit]] = False

    Xstop = X if domain is None else np.clip(X, domain[0], domain[1])
    vals = _eval(source, Xstop) + integral
    if mode == "girsanov" and drift.active:
        vals = vals * np.exp(logw)
    se = float(vals.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else float("nan")
    return FkEstimate(float(vals.mean()), se, n_paths, float(stop_time.mean()))


@dataclass
class MaxPrincipleReport:
    bound: float
    observed_max: float
    margin: float
    ok: bool
    interior_max: np.ndarray = field(repr=False)

    @property
    def monotone_decay(self) -> bool:
        return bool(np.all(np.diff(self.interior_max) <= 1e-12))


def check_maximum_principle(u_series, boundary_values, tol: float = 1e-6) -> MaxPrincipleReport:
    """Compare the solution over all later times against the largest value
    on the boundary nodes and in the terminal data ``u_series[0]``."""
    u_series = np.asarray(u_series, dtype=float)
    bound = max(float(np.max(boundary_values)), float(u_series[0].max()))
    later = u_series[1:] if len(u_series) > 1 else u_series
    observed = float(later.max())
    margin = bound - observed
    return MaxPrincipleReport(
        bound, observed, margin, margin >= -tol, u_series[:, 1:-1].max(axis=1)
    )


@dataclass
class GeneralizationBracket:
    lower: float
    upper: float
    lower_margin: float
    upper_margin: float

    @property
    def ok(self) -> bool:
        return self.lower_margin >= -1e-9 and self.upper_margin >= -1e-9


def generalization_bracket(u_start, u_end, boundary_values, lipschitz: float, tau: float) -> GeneralizationBracket:
    """``min(boundary, start) <= u_end <= C tau + max(start)`` with margins."""
    u_start = np.asarray(u_start, dtype=float)
    u_end = np.asarray(u_end, dtype=float)
    lower = min(float(np.min(boundary_values)), float(u_start.min()))
    upper = lipschitz * tau + float(u_start.max())
    return GeneralizationBracket(lower, upper, float(u_end.min()) - lower, upper - float(u_end.max()))


# -- built-in verification suite ---------------------------------------------------

def bump_source(x):
    x = np.asarray(x, dtype=float)
    return 1.0 + np.exp(-((x - 0.5) ** 2) / (2 * 0.1**2))


def const_source(x):
    return np.ones_like(np.asarray(x, dtype=float))


def zero_source(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SuiteProblem:
    problem_id: str
    x0: float
    source: object
    drift: DriftDescriptor = NO_DRIFT
    mode: str = "direct"
    rel_tol: float = 0.05
    t: float = 1.0
    sigma: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    epsilon: float = 0.01

    def boundary(self) -> BoundarySet:
        return BoundarySet(np.array([self.lo, self.hi]), self.epsilon)


def default_suite() -> list[SuiteProblem]:
    centred = DriftDescriptor("gaussian_prior", (0.5,), 1.0)
    return [
        SuiteProblem("bump_mid", 0.5, bump_source),
        SuiteProblem("bump_off", 0.3, bump_source),
        SuiteProblem("const", 0.5, const_source),
        SuiteProblem("zero", 0.5, zero_source),
        SuiteProblem("drift_direct", 0.35, bump_source, centred, "direct", rel_tol=0.10),
        SuiteProblem("drift_girsanov", 0.35, bump_source, centred, "girsanov", rel_tol=0.10),
    ]


MIN_CONCLUSIVE_PATHS = 30


def fd_value_at(p: SuiteProblem, n_grid: int = 199) -> float:
    grid = Grid1D(p.lo, p.hi, n_grid)
    dt = 0.9 * stable_dt(grid, p.sigma, p.drift)
    u = solve_fd(grid, p.sigma, p.source, p.boundary(), p.t, dt, drift=p.drift)
    return float(np.interp(p.x0, grid.nodes(), u))


def verify_problem(p: SuiteProblem, n_paths: int, dt: float, rng, n_grid: int = 199) -> dict:
    fd = fd_value_at(p, n_grid)
    est = estimate_fk(p.x0, p.t, p.sigma, p.source, p.boundary(), n_paths, dt, rng,
                      drift=p.drift, mode=p.mode, domain=(p.lo, p.hi))
    tol = max(3 * est.stderr, p.rel_tol * abs(fd)) if np.isfinite(est.stderr) else np.nan
    diff = abs(est.value - fd)
    if n_paths < MIN_CONCLUSIVE_PATHS or not np.isfinite(tol):
        status = "inconclusive"
    elif diff <= tol or (fd == 0 and diff == 0):
        status = "pass"
    else:
        status = "fail"
    return {
        "problem_id": p.problem_id,
        "x0": p.x0,
        "t": p.t,
        "fd_value": fd,
        "fk_value": est.value,
        "stderr": est.stderr,
        "status": status,
    }


def run_suite(n_paths: int = 10_000, dt: float = 1e-3, seed: int = 0, problems=None) -> list[dict]:
    problems = default_suite() if problems is None else problems
    rows = []
    for i, p in enumerate(problems):
        rng = np.random.default_rng([seed, i])
        rows.append(verify_problem(p, n_paths, dt, rng))
    return rows
