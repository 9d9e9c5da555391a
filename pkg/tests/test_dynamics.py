from __future__ import annotations

import csv
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from conftest import exact_solution, system
from stokeslab import dynamics as dyn
from stokeslab.casestudies import linked_pair
from stokeslab.odesys import OdeSystem
from stokeslab.series import SeriesVec, TruncatedSeries


def euler_pv(x: float) -> float:
    return float(mpmath.e ** (-1 / mpmath.mpf(x)) * mpmath.ei(1 / mpmath.mpf(x)))


@pytest.fixture(scope="module")
def euler_traj():
    s = system("euler")
    hv = exact_solution("euler", 40)
    return dyn.integrate(s, 0.3, dyn.seed(s, hv, 0.3), 0.02, tol=1e-10)


def flow_traj(name, tol, xs, zs):
    s = system(name)
    hv = exact_solution(name, 40)
    grid = dyn.flow_points(xs, zs, s.p)
    return s, dyn.integrate(s, 0.3, dyn.seed(s, hv, 0.3), 0.04, tol=tol, grid=grid)


FLOW_X = np.linspace(0.05, 0.2, 7)
FLOW_Z = np.linspace(-1.0, 1.0, 9)


# -- integration


def test_euler_tracks_principal_value(euler_traj):
    # H = PV + c e^(-1/x); c is fixed by the seed at x = 0.3
    c = (euler_traj.values[0][0] - euler_pv(0.3)) * math.exp(1 / 0.3)
    for x, v in zip(euler_traj.grid, euler_traj.values):
        assert abs(v[0] - euler_pv(x) - c * math.exp(-1 / x)) < 1e-6


def test_euler_difference_is_exponentially_small(euler_traj):
    pairs = [(x, v[0] - euler_pv(x)) for x, v in zip(euler_traj.grid, euler_traj.values) if x >= 0.06]
    a, k = dyn.exp_order_fit([q[0] for q in pairs], [q[1] for q in pairs])
    assert k == 1 and a == pytest.approx(1, rel=0.01)


@pytest.mark.parametrize("offset", [(0.0, 0.0), (0.05, -0.03), (-0.2, 0.1)])
def test_euler2d_solutions_tend_to_zero(offset):
    s = system("euler2d")
    y0 = dyn.seed(s, exact_solution("euler2d", 30), 0.3, offset=offset)
    tr = dyn.integrate(s, 0.3, y0, 0.005)
    assert np.linalg.norm(tr.values[-1]) < 0.01
    # the limit is approached like the leading term x (1/2, 1/2)
    assert tr.values[-1] == pytest.approx([0.0025, 0.0025], rel=0.05)


def test_agrees_with_scipy_radau():
    s = system("euler2d")
    y0 = dyn.seed(s, exact_solution("euler2d", 30), 0.3)
    grid = np.geomspace(0.3, 0.05, 30)
    tr = dyn.integrate(s, 0.3, y0, 0.05, tol=1e-11, grid=grid)
    fld = s.field()
    ref = solve_ivp(fld, (0.3, 0.05), y0, method="Radau", t_eval=tr.grid, rtol=1e-11, atol=1e-14)
    assert np.max(np.abs(ref.y.T - tr.values)) < 1e-8


def test_growing_branch_blows_up():
    s = OdeSystem.from_dict({"p": 1, "r": 1, "name": "grow", "terms": [
        {"component": 0, "x_exp": 0, "y_exps": [1], "coeff": [-1, 0]}]})
    with pytest.raises(dyn.BlowUp):
        dyn.integrate(s, 0.3, [0.1], 0.02)


def test_invalid_ranges():
    s = system("euler")
    with pytest.raises(ValueError):
        dyn.integrate(s, 0.1, [0.0], 0.2)
    with pytest.raises(ValueError):
        dyn.integrate(s, 0.3, [0.0], 0.1, tol=0)


def test_trajectory_invariants(euler_traj):
    assert np.all(np.diff(euler_traj.grid) < 0) and np.all(euler_traj.grid > 0)
    assert np.all(np.isfinite(euler_traj.values))
    assert euler_traj.stats.steps > 0
    with pytest.raises(ValueError):
        dyn.Trajectory(np.array([0.1, 0.2]), np.zeros((2, 1)), euler_traj.stats, 1e-10)


def test_grid_points_hit_and_interpolation(euler_traj):
    x = float(euler_traj.grid[10])
    assert np.array_equal(euler_traj.at(x), euler_traj.values[10])
    mid = 0.5 * (euler_traj.grid[10] + euler_traj.grid[11])
    c = (euler_traj.values[0][0] - euler_pv(0.3)) * math.exp(1 / 0.3)
    assert abs(euler_traj.at(mid)[0] - euler_pv(mid) - c * math.exp(-1 / mid)) < 1e-8


def test_trajectory_csv(tmp_path, euler_traj):
    path = tmp_path / "traj.csv"
    euler_traj.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "y1", "step"]
    assert len(rows) == 1 + len(euler_traj.grid)
    assert float(rows[1][0]) == euler_traj.grid[0]


# -- remainder constants


def test_euler_remainders_finite_and_factorial(euler_traj):
    cs = dyn.remainder_check(euler_traj, exact_solution("euler", 40), 8)
    assert all(math.isfinite(c) for c in cs)
    ratios = [b / a for a, b in zip(cs, cs[1:])]
    assert all(r2 > r1 for r1, r2 in zip(ratios, ratios[1:]))


def test_remainder_with_zero_series(euler_traj):
    zero = SeriesVec((TruncatedSeries.zero(5),))
    c0 = dyn.remainder_check(euler_traj, zero, 0)[0]
    # sup |H(x) / x| over (0, 0.1] is h_1 + O(x)
    assert 1.0 <= c0 <= 1.2


def test_convergent_remainders_follow_analytic_tail():
    s = system("convergent")
    hv = exact_solution("convergent", 40)
    tr = dyn.integrate(s, 0.3, dyn.seed(s, hv, 0.3), 0.02)
    # beyond N = 4 the integration error divided by x^(N+1) takes over
    cs = dyn.remainder_check(tr, hv, 4)
    # remainder of z / (1 - z) after degree N is z^(N+1) / (1 - z): C_N = 1 / (1 - x_top)
    x_top = float(tr.grid[tr.grid <= 0.1][0])
    for c in cs:
        assert c == pytest.approx(1 / (1 - x_top), rel=1e-5)


def test_euler2d_family_shares_remainders():
    s = system("euler2d")
    hv = exact_solution("euler2d", 40)
    out = []
    for off in (None, (0.01, -0.01)):
        tr = dyn.integrate(s, 0.3, dyn.seed(s, hv, 0.3, offset=off), 0.01)
        out.append(dyn.remainder_check(tr, hv, 8, x_max=0.05))
    for a, b in zip(*out):
        assert math.isfinite(a) and abs(a - b) <= 1e-2 * a


# -- flow identity


def test_flow_identity_zero_shift():
    s, tr = flow_traj("euler", 1e-10, FLOW_X, [0.0])
    assert dyn.flow_identity_check(s, tr, FLOW_X, [0.0]) == 0.0


@pytest.mark.parametrize("name,bound", [("euler", 1e-8), ("euler2d", 1e-7)])
def test_flow_identity(name, bound):
    s, tr = flow_traj(name, 1e-10, FLOW_X, FLOW_Z)
    assert dyn.flow_identity_check(s, tr, FLOW_X, FLOW_Z, tol=1e-10) < bound


@pytest.mark.parametrize("name", ["euler", "euler2d"])
def test_flow_identity_scales_with_tolerance(name):
    errs = []
    for tol in (1e-10, 1e-8):
        s, tr = flow_traj(name, tol, FLOW_X, FLOW_Z)
        errs.append(dyn.flow_identity_check(s, tr, FLOW_X, FLOW_Z, tol=tol))
    assert 10 <= errs[1] / errs[0] <= 1000


# -- winding and zeros


def test_winding_examples():
    assert dyn.winding([1 + 1j] * 10) == 0.0
    xs = dyn.winding_grid(0.02, 0.3)
    turns = dyn.winding(np.exp(1j / xs))
    assert turns == pytest.approx((1 / 0.02 - 1 / 0.3) / (2 * math.pi), rel=1e-12)
    assert f"{turns:.3g}" == "7.43"


def test_winding_errors():
    with pytest.raises(dyn.ZeroSample):
        dyn.winding([1, 0, 1j])
    with pytest.raises(dyn.UndersampledArc):
        dyn.winding([1, -1 + 0.01j])


@given(st.floats(0.5, 5.0), st.floats(0.01, 0.1), st.floats(0.15, 1.0))
def test_winding_of_rotating_phase(rate, x_min, x_max):
    xs = dyn.winding_grid(x_min, x_max, rate=rate)
    turns = dyn.winding(np.exp(1j * rate / xs))
    assert turns == pytest.approx(rate * (1 / x_min - 1 / x_max) / (2 * math.pi), rel=1e-9)


def test_zero_count_examples():
    xs = np.geomspace(0.3, 0.02, 4000)
    assert dyn.zero_count(np.sin(1 / xs)) == 14
    assert dyn.zero_count(np.ones(20)) == 0
    assert dyn.zero_count([1, 0, -1, 0, 1]) == 2


@pytest.fixture(scope="module")
def pair():
    return linked_pair()


def test_euler2d_pair_links(pair):
    p, g = pair
    d = p.difference
    keep = (d.grid >= 0.02 - 1e-15) & (d.grid <= 0.3 + 1e-15)
    v = d.values[keep]
    turns = dyn.winding(v[:, 0] + 1j * v[:, 1])
    expected = (1 / 0.02 - 1 / 0.3) / (2 * math.pi)
    assert abs(turns) >= 5 and abs(abs(turns) - expected) <= 0.2 * expected
    assert dyn.zero_count(v[:, 0]) >= 10


def test_pair_difference_matches_separate_solutions(pair):
    p, _ = pair
    direct = p.second.values - p.first.values
    big = p.first.grid >= 0.1
    assert np.allclose(direct[big], p.difference.values[big], atol=1e-9)


def test_winding_decreases_with_window(pair):
    p, _ = pair
    d = p.difference
    prev = math.inf
    for x_min in (0.02, 0.03, 0.05, 0.08):
        keep = (d.grid >= x_min - 1e-15) & (d.grid <= 0.3 + 1e-15)
        v = d.values[keep]
        turns = abs(dyn.winding(v[:, 0] + 1j * v[:, 1]))
        assert turns < prev
        prev = turns


# -- exponential order


def test_exp_order_examples():
    xs = np.geomspace(0.1, 0.5, 12)
    assert dyn.exp_order_fit(xs, np.exp(-1 / xs)) == pytest.approx((1, 1))
    assert dyn.exp_order_fit(xs, np.exp(-2 / xs ** 2)) == pytest.approx((2, 2))


def test_exp_order_preconditions():
    with pytest.raises(dyn.FitDiverged):
        dyn.exp_order_fit(np.geomspace(0.1, 0.5, 5), np.ones(5))
    with pytest.raises(dyn.FitDiverged):
        dyn.exp_order_fit(np.geomspace(0.1, 0.2, 12), np.ones(12))


def test_diagnostics_json():
    out = json.loads(dyn.diagnostics_json(c=[np.float64(1.5), 2], n=np.int64(3), t={"a": 0.25}))
    assert out == {"c": [1.5, 2], "n": 3, "t": {"a": 0.25}}
