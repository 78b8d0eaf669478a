import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from parabolic_cl.errors import ParameterError
from parabolic_cl.fkpde import (
    BoundarySet,
    Grid1D,
    SuiteProblem,
    bump_source,
    check_maximum_principle,
    const_source,
    default_suite,
    estimate_fk,
    fd_value_at,
    generalization_bracket,
    run_suite,
    solve_fd,
    stable_dt,
    zero_source,
)
from parabolic_cl.loss import DriftDescriptor

ENDS = BoundarySet(np.array([0.0, 1.0]), 0.01)


def test_grid_and_boundary_validation():
    with pytest.raises(ParameterError):
        Grid1D(1.0, 0.0, 10)
    with pytest.raises(ParameterError):
        Grid1D(0.0, 1.0, 2)
    with pytest.raises(ParameterError):
        BoundarySet(np.array([0.0]), 0.0)
    g = Grid1D(0.0, 1.0, 3)
    assert g.dx == 0.25
    assert_allclose(g.nodes(), [0, 0.25, 0.5, 0.75, 1.0])


def test_boundary_uses_squared_distance():
    b = BoundarySet(np.array([0.0]), 0.01)
    assert_array_equal(b.contains(np.array([0.05, -0.099, 0.101])), [True, True, False])


def test_zero_solution():
    g = Grid1D(0.0, 1.0, 50)
    u = solve_fd(g, 1.0, zero_source, ENDS, 0.5, 0.9 * stable_dt(g, 1.0))
    assert np.all(u == 0.0)


def test_stability_violation_raises():
    g = Grid1D(0.0, 1.0, 50)
    with pytest.raises(ParameterError):
        solve_fd(g, 1.0, const_source, None, 0.1, 1.01 * stable_dt(g, 1.0))


def test_poisson_steady_state():
    g = Grid1D(0.0, 1.0, 200)
    sigma, c = 1.0, 1.0
    u = solve_fd(g, sigma, const_source, None, 5.0, 0.95 * stable_dt(g, sigma))
    x = g.nodes()
    exact = c * (x - 0.0) * (1.0 - x) / sigma**2 + c
    assert np.max(np.abs(u - exact) / exact) < 1e-3


def _bump_solution(n, t=0.1):
    g = Grid1D(0.0, 1.0, n)
    dt = 0.4 * g.dx**2  # fixed ratio keeps the time error second order in dx
    u = solve_fd(g, 1.0, bump_source, None, t, dt, initial=zero_source, boundary_value=zero_source)
    return g.nodes(), u


def test_second_order_convergence():
    x_ref, u_ref = _bump_solution(319)
    errs = []
    for n in (19, 39, 79):
        x, u = _bump_solution(n)
        errs.append(np.max(np.abs(u - np.interp(x, x_ref, u_ref))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders >= 1.7) & (orders <= 2.3)), orders


def test_fk_inside_boundary_is_source(rng):
    est = estimate_fk(0.005, 1.0, 1.0, bump_source, ENDS, 100, 1e-3, rng)
    assert est.value == bump_source(0.005)
    assert est.stderr == 0.0
    assert est.mean_hitting_time == 0.0


def test_fk_zero_source(rng):
    est = estimate_fk(0.5, 1.0, 1.0, zero_source, ENDS, 500, 1e-2, rng, domain=(0, 1))
    assert est.value == 0.0


def test_fk_needs_paths(rng):
    with pytest.raises(ParameterError):
        estimate_fk(0.5, 1.0, 1.0, bump_source, ENDS, 0, 1e-3, rng)


def test_suite_all_pass():
    rows = run_suite(n_paths=10_000, dt=1e-3, seed=0)
    assert [r["problem_id"] for r in rows] == [p.problem_id for p in default_suite()]
    for r in rows:
        assert r["status"] == "pass", r


def test_single_path_is_inconclusive():
    rows = run_suite(n_paths=1, dt=1e-2, seed=0)
    assert {r["status"] for r in rows} == {"inconclusive"}


def test_stderr_scales_inverse_sqrt():
    ns = np.array([250, 1000, 4000, 16000])
    se = [estimate_fk(0.5, 1.0, 1.0, bump_source, ENDS, int(n), 1e-2,
                      np.random.default_rng(int(n)), domain=(0, 1)).stderr for n in ns]
    slope = np.polyfit(np.log(ns), np.log(se), 1)[0]
    assert abs(slope + 0.5) < 0.1


def test_dt_halving_changes_little():
    p = default_suite()[0]
    vals = []
    for dt in (2e-3, 1e-3):
        est = estimate_fk(p.x0, p.t, p.sigma, p.source, p.boundary(), 20_000, dt,
                          np.random.default_rng(1), domain=(p.lo, p.hi))
        vals.append(est)
    diff = abs(vals[0].value - vals[1].value)
    assert diff <= max(3 * np.hypot(vals[0].stderr, vals[1].stderr), 0.02 * vals[1].value)


def test_drift_modes_agree():
    drift = DriftDescriptor("gaussian_prior", (0.5,), 1.0)
    a = estimate_fk(0.35, 1.0, 1.0, bump_source, ENDS, 10_000, 1e-3, np.random.default_rng(5),
                    drift=drift, mode="direct", domain=(0, 1))
    b = estimate_fk(0.35, 1.0, 1.0, bump_source, ENDS, 10_000, 1e-3, np.random.default_rng(6),
                    drift=drift, mode="girsanov", domain=(0, 1))
    assert abs(a.value - b.value) <= 3 * np.hypot(a.stderr, b.stderr) + 0.02 * abs(a.value)


def test_drifted_fd_agrees_with_fk():
    p = SuiteProblem("d", 0.35, bump_source, DriftDescriptor("gaussian_prior", (0.5,), 1.0))
    fd = fd_value_at(p)
    est = estimate_fk(p.x0, p.t, p.sigma, p.source, p.boundary(), 10_000, 1e-3,
                      np.random.default_rng(2), drift=p.drift, domain=(0, 1))
    assert abs(est.value - fd) / fd < 0.10


def test_heat_equation_maximum_principle():
    g = Grid1D(0.0, 1.0, 60)
    x = g.nodes()
    _, series = solve_fd(g, 1.0, zero_source, None, 0.2, 0.9 * stable_dt(g, 1.0),
                         initial=lambda x: np.sin(np.pi * x) ** 2, boundary_value=lambda x: 1.0 + 0 * x,
                         keep_series=True)
    rep = check_maximum_principle(series, [1.0, 1.0])
    assert rep.observed_max <= 1 + 1e-9
    assert rep.ok


def test_bump_decays_monotonically():
    g = Grid1D(0.0, 1.0, 60)
    _, series = solve_fd(g, 1.0, zero_source, None, 0.3, 0.9 * stable_dt(g, 1.0),
                         initial=lambda x: 3.0 * np.exp(-((x - 0.4) ** 2) / 0.01),
                         boundary_value=zero_source, keep_series=True)
    rep = check_maximum_principle(series, [0.0, 0.0])
    assert rep.monotone_decay
    assert rep.interior_max[-1] < rep.interior_max[0]


def _random_smooth(rng, scale=1.0):
    a = rng.uniform(0, scale, size=3)
    c = rng.uniform(0, 1, size=3)
    w = rng.uniform(0.05, 0.3, size=3)
    return lambda x: sum(a[i] * np.exp(-((np.asarray(x) - c[i]) ** 2) / (2 * w[i] ** 2)) for i in range(3))


def test_maximum_principle_sweep():
    g = Grid1D(0.0, 1.0, 40)
    margins = []
    for seed in range(50):
        r = np.random.default_rng(seed)
        source, terminal = _random_smooth(r), _random_smooth(r, 2.0)
        ends = r.uniform(0, 2, size=2)
        bv = lambda x, e=ends: np.interp(x, [0, 1], e)
        balls = BoundarySet(r.uniform(0, 1, size=2), 0.001)
        _, series = solve_fd(g, 1.0, source, balls, 0.5, 0.9 * stable_dt(g, 1.0),
                             initial=terminal, boundary_value=bv, backward=True, keep_series=True)
        pinned = np.r_[True, balls.contains(g.nodes()[1:-1]), True]
        rep = check_maximum_principle(series, bv(g.nodes())[pinned])
        margins.append(rep.margin)
        assert rep.ok
    assert min(margins) >= -1e-6


def test_generalization_bracket_on_fd():
    g = Grid1D(0.0, 1.0, 60)
    dt = 0.9 * stable_dt(g, 1.0)
    # source vanishing inside the domain keeps sup of the loss within C times the domain diameter
    src = lambda x: 0.0 * x
    start = lambda x: 0.5 + 0.5 * x
    u0 = start(g.nodes())
    u1 = solve_fd(g, 1.0, src, None, 0.5, dt, initial=start, boundary_value=start)
    br = generalization_bracket(u0, u1, u0[[0, -1]], lipschitz=0.5, tau=0.5)
    assert br.ok
    assert br.lower == 0.5


def test_maximum_principle_reports_violation():
    series = np.array([[0.0, 1.0, 0.0], [0.0, 2.0, 0.0]])
    rep = check_maximum_principle(series, [0.0, 0.0])
    assert not rep.ok
    assert rep.margin == pytest.approx(-1.0)
