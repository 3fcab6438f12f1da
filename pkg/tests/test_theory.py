import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import bisect, linprog

from mbmlab.errors import ConfigurationError
from mbmlab.theory import (_grid_maximum, _grid_maximum_full, constraint_exponents, exponent_bound, region_raster,
                           smoothing_condition, smoothing_threshold, write_exponent_csv, write_region_csv)

CENTERS50 = (np.arange(50) + 0.5) / 50


def lp_optimum(a, beta, ell, eps):
    """max z subject to z <= each exponent, 0 <= eta <= gamma <= 1, solved as a linear program."""
    L = ell - 1 - eps
    # variables (eta, gamma, z); minimize -z
    A = [[-beta, 0.0, 1.0],              # z <= a + beta eta
         [0.0, 1.0 - a, 1.0],            # z <= 1 - (1 - a) gamma
         [L, -(L + a), 1.0],             # z <= L (gamma - eta) + a gamma
         [1.0, -1.0, 0.0]]               # eta <= gamma
    res = linprog([0, 0, -1], A_ub=A, b_ub=[a, 1.0, 0.0, 0.0], bounds=[(0, 1), (0, 1), (None, None)],
                  method="highs")
    assert res.success
    return -res.fun


def test_condition_examples():
    assert smoothing_condition(0.5, 0.5)
    assert smoothing_condition(0.45, 0.55)
    assert not smoothing_condition(0.1, 0.9)
    with pytest.raises(ConfigurationError):
        smoothing_condition(0.6, 0.5)
    with pytest.raises(ConfigurationError):
        smoothing_condition(0.0, 0.5)


def test_threshold_row_at_one_half():
    root = bisect(lambda b: b * b - 0.5 * b - 0.25, 0.5, 1.0, xtol=1e-15)
    assert smoothing_threshold(0.5) == pytest.approx(root, abs=1e-14)
    assert root == pytest.approx(0.80902, abs=1e-5)
    assert smoothing_condition(0.5, root - 1e-9) and not smoothing_condition(0.5, root + 1e-9)


def test_exponent_known_values():
    r = exponent_bound(0.45, 0.55, beta=1.0, ell=4)
    assert r.d == pytest.approx(0.7420181642751551, abs=1e-9)
    assert r.feasible and 0 < r.eta_star < r.gamma_star < 1
    assert r.d <= min(r.constraint_values) + 1e-12


def test_exponent_example_three_constraint_optimum():
    # value of the full three-constraint problem, from the linear program
    assert exponent_bound(0.3, 0.4, beta=1.0, ell=20).d == pytest.approx(0.6993987681052787, abs=1e-9)


def test_exponent_example_two_constraint_candidate():
    # equating the first two exponents gives a + beta (1 - a) / (beta + 1 - a) = 0.7118 at gamma = 0.4118
    r = exponent_bound(0.3, 0.4, beta=1.0, ell=20)
    assert r.d == pytest.approx(0.7118, abs=1e-3)
    assert r.gamma_star == pytest.approx(0.4118, abs=1e-3)


def test_exponent_two_constraint_candidate_reached_for_large_ell():
    r = exponent_bound(0.3, 0.4, beta=1.0, ell=10**6)
    assert r.d == pytest.approx(0.3 + 0.7 / 1.7, abs=1e-6)


def test_equal_range_is_feasible():
    for a in (0.1, 0.5, 0.9):
        r = exponent_bound(a, a)
        assert r.feasible and r.eta_star > 0


@pytest.mark.parametrize("beta,ell", [(0.9, 4), (1.0, 64), (2.0, 10)])
def test_far_outside_region_is_infeasible(beta, ell):
    assert not exponent_bound(0.1, 0.9, beta=beta, ell=ell).feasible


@settings(max_examples=80, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.floats(0.2, 3.0), st.integers(2, 80))
def test_exponent_matches_linear_program(a, b, beta, ell):
    assume(a <= b)
    r = exponent_bound(a, b, beta=beta, ell=ell)
    assert r.d == pytest.approx(min(lp_optimum(a, beta, ell, 1e-3), 1.0), abs=1e-9)
    assert r.d <= 1.0
    assert r.feasible == (r.d > b)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.2, 3.0), st.integers(2, 80), st.sampled_from([10, 37, 200]))
def test_fast_grid_scan_equals_full_scan(a, beta, ell, n):
    assert _grid_maximum(n, a, beta, ell, 1e-3) == _grid_maximum_full(n, a, beta, ell, 1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.floats(0.2, 2.0), st.integers(2, 40))
def test_exponent_monotone_in_ell_and_beta(a, b, beta, ell):
    assume(a <= b)
    base = exponent_bound(a, b, beta=beta, ell=ell).d
    assert exponent_bound(a, b, beta=beta, ell=ell + 1).d >= base - 1e-12
    assert exponent_bound(a, b, beta=beta * 1.5, ell=ell).d >= base - 1e-12


def test_feasibility_matches_condition_on_grid():
    mismatches = [(a, b) for a in CENTERS50 for b in CENTERS50
                  if a <= b and exponent_bound(a, b, beta=b, ell=64).feasible != smoothing_condition(a, b)]
    assert mismatches == []


def test_feasibility_matches_condition_for_very_large_ell():
    mismatches = [(a, b) for a in CENTERS50 for b in CENTERS50
                  if a <= b and exponent_bound(a, b, beta=b, ell=10**6).feasible != smoothing_condition(a, b)]
    assert mismatches == []


def test_region_raster():
    a, b, f = region_raster(100)
    assert f.shape == (100, 100)
    for i in range(0, 100, 7):
        for j in range(100):
            expected = a[i] <= b[j] and smoothing_condition(a[i], b[j])
            assert f[i, j] == expected
    assert all(f[i, i] for i in range(100))
    # feasibility grows as a approaches b
    for j in range(100):
        col = f[: j + 1, j]
        first = np.argmax(col)
        assert col[first:].all()
    with pytest.raises(ConfigurationError):
        region_raster(5)


def test_constraint_exponents_and_errors():
    c = constraint_exponents(0.2, 0.5, 0.4, 1.0, 4, 1e-3)
    assert c == pytest.approx((0.6, 0.7, 0.3 * 2.999 + 0.2))
    for kw in (dict(ell=1), dict(beta=-1.0), dict(epsilon_slack=0.0), dict(grid_resolution=5)):
        with pytest.raises(ConfigurationError):
            exponent_bound(0.4, 0.5, **kw)


def test_csv_writers(tmp_path):
    lines = write_region_csv(10, tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "a,b,feasible" and len(lines) == 101
    rows = write_exponent_csv(exponent_bound(0.45, 0.55), tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "field,value" and rows[6] == "feasible,1"
