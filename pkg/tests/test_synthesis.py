from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from mbmlab.analysis import fbm_constant
from mbmlab.errors import ConfigurationError, CoverageError
from mbmlab.hurst import HurstFunction
from mbmlab.noise import NoiseLattice
from mbmlab.synthesis import (SynthesisConfig, dyadic_thetas, g_jk, synthesize_field, synthesize_mbm,
                              synthesize_residual, synthesize_z, truncated_covariance, write_paths_csv)

SMALL = dict(j_min=-4, j_max=6, k_window=10)
GRID = np.array([0.0, 0.125, 0.3, 0.5, 0.75, 1.0])


def small(reps=20, grid=GRID, **kw):
    return SynthesisConfig(**{**SMALL, **kw}, t_grid=grid, replicates=reps)


def test_g_jk_zero_at_origin(table):
    assert g_jk(0.0, 0.4, 3, -5, 0, table) == 0.0
    np.testing.assert_array_equal(g_jk(0.0, 0.6, np.arange(-3, 4), 2, 2, table), 0.0)


def test_g_jk_theta_derivative_matches_finite_difference(table):
    d = 1e-5
    for t, th, j, k in ((0.3, 0.5, 2, 1), (0.71, 0.35, -1, 0), (0.9, 0.62, 4, 14)):
        fd = (g_jk(t, th + d, j, k, 0, table) - g_jk(t, th - d, j, k, 0, table)) / (2 * d)
        assert g_jk(t, th, j, k, 1, table) == pytest.approx(fd, abs=1e-6)


def test_g_jk_at_scale_zero_is_plain_difference(table):
    for n in range(3):
        expected = table.value(0.4 - 3, 0.55, n) - table.value(-3.0, 0.55, n)
        assert g_jk(0.4, 0.55, 0, 3, n, table) == pytest.approx(expected, abs=1e-14)


def test_g_jk_order_too_large(table):
    with pytest.raises(CoverageError):
        g_jk(0.3, 0.5, 1, 0, 3, table)


def test_paths_vanish_at_origin(table):
    H = HurstFunction.sine(0.5, 0.1)
    b = synthesize_residual(H, small(), NoiseLattice(1), table, components=True)
    for name in ("X", "Z", "R", "X_low", "X_high", "Z_low", "Z_high"):
        np.testing.assert_array_equal(b[name][:, 0], 0.0)
    f = synthesize_field(0.4, small(), NoiseLattice(1), table)
    np.testing.assert_array_equal(f["B"][:, 0], 0.0)


def test_constant_hurst_gives_identical_paths(table):
    cfg, lat = small(), NoiseLattice(3)
    H = HurstFunction.constant(0.6)
    b = synthesize_field(0.6, cfg, lat, table)["B"]
    x = synthesize_mbm(H, cfg, lat, table)["X"]
    z = synthesize_z(H, cfg, lat, table)["Z"]
    np.testing.assert_array_equal(x, b)
    np.testing.assert_array_equal(z, x)
    assert np.max(np.abs(synthesize_residual(H, cfg, lat, table)["R"])) < 1e-12


def test_partition_and_residual_identities(table):
    H = HurstFunction.logistic(0.3, 0.7, 0.5, 0.1)
    b = synthesize_residual(H, small(), NoiseLattice(5), table, components=True)
    for name in ("X", "Z"):
        np.testing.assert_array_equal(b[name], b[name + "_low"] + b[name + "_high"])
    np.testing.assert_array_equal(b["R"], b["Z"] - b["X"])


def test_linear_in_noise(table):
    H = HurstFunction.sine(0.5, 0.1)
    cfg = small()
    base = synthesize_residual(H, cfg, NoiseLattice(9), table)
    scaled = synthesize_residual(H, cfg, NoiseLattice(9, scale=4.0), table)
    for name in ("X", "Z"):
        np.testing.assert_array_equal(scaled[name], 4.0 * base[name])


def test_workers_do_not_change_output(table):
    H = HurstFunction.sine(0.5, 0.1)
    one = synthesize_mbm(H, small(reps=600), NoiseLattice(2), table)["X"]
    cfg = small(reps=600)
    cfg.workers = 3
    np.testing.assert_array_equal(synthesize_mbm(H, cfg, NoiseLattice(2), table)["X"], one)


def _step_oracle(breaks, values, j, k):
    # exact rational comparison of k / 2**j with each break
    x = Fraction(int(k)) / Fraction(2) ** int(j) if j >= 0 else Fraction(int(k) * 2 ** int(-j))
    idx = sum(1 for b in breaks if Fraction(b) <= x)
    return values[idx]


def test_step_hurst_per_term_values(rng):
    breaks, values = (0.25, 0.5, 0.8125), (0.3, 0.45, 0.7, 0.55)
    H = HurstFunction.step(breaks, values)
    j = rng.integers(-3, 12, 100)
    k = np.round(rng.uniform(-0.5, 1.5, 100) * np.exp2(j)).astype(np.int64)
    # force exact hits on every break
    j[:3] = 4
    k[:3] = [4, 8, 13]
    got = dyadic_thetas(H, j, k)
    expected = [_step_oracle(breaks, values, jj, kk) for jj, kk in zip(j, k)]
    np.testing.assert_array_equal(got, expected)


def test_field_variance_at_one(table):
    cfg = SynthesisConfig(t_grid=[0.5, 1.0], replicates=2000)
    b = synthesize_field(0.5, cfg, NoiseLattice(0), table)["B"]
    # normalized kernel: 2 pi c(0.5) / (2 pi) with c(0.5) = 2 pi, i.e. the spectral value 2 pi
    assert 2 * np.pi * np.var(b[:, 1]) / fbm_constant(0.5) == pytest.approx(2 * np.pi, rel=0.05)
    assert np.var(b[:, 1]) == pytest.approx(fbm_constant(0.5), rel=0.05)


def test_mbm_variance_matches_local_fbm(table):
    H = HurstFunction.sine(0.5, 0.1)
    t = np.array([0.25, 0.5, 1.0])
    x = synthesize_mbm(H, SynthesisConfig(t_grid=t, replicates=2000), NoiseLattice(0), table)["X"]
    expected = np.array([fbm_constant(h) for h in H(t)]) * t ** (2 * H(t))
    np.testing.assert_allclose(np.var(x, axis=0), expected, rtol=0.07)


def test_mbm_truncated_variance_matches_local_fbm(table):
    # exact law of the truncated series, free of Monte Carlo error
    H = HurstFunction.sine(0.5, 0.1)
    t = np.array([0.25, 0.5, 1.0])
    var = np.diag(truncated_covariance(SynthesisConfig(t_grid=t), table, H=H))
    expected = np.array([fbm_constant(h) for h in H(t)]) * t ** (2 * H(t))
    np.testing.assert_allclose(var, expected, rtol=0.01)


def test_field_truncated_covariance_matches_fbm(table):
    from mbmlab.analysis import fbm_covariance
    t = np.array([0.2, 0.5, 0.9])
    for theta in (0.3, 0.5):
        cov = truncated_covariance(SynthesisConfig(t_grid=t), table, theta=theta)
        np.testing.assert_allclose(cov, fbm_covariance(t[:, None], t[None, :], theta), rtol=0.01)


def test_truncated_covariance_matches_sample(table):
    cfg = small(reps=4000)
    H = HurstFunction.sine(0.5, 0.1)
    cov = truncated_covariance(cfg, table, H=H, process="Z")
    z = synthesize_z(H, cfg, NoiseLattice(4), table)["Z"]
    emp = z.T @ z / z.shape[0]
    np.testing.assert_allclose(emp[1:, 1:], cov[1:, 1:], rtol=0.1, atol=0.02)
    assert np.all(np.linalg.eigvalsh(cov) > -1e-12)


def test_marginal_is_gaussian(table):
    H = HurstFunction.sine(0.5, 0.1)
    x = synthesize_mbm(H, SynthesisConfig(t_grid=[1.0], replicates=2000), NoiseLattice(0), table)["X"][:, 0]
    assert stats.normaltest(x).pvalue > 0.01


def test_truncation_stability(table):
    # enlarging (j_max, k_window) from (12, 50) to (14, 80) should move every path value by
    # less than 1e-3 of its standard deviation
    H = HurstFunction.sine(0.5, 0.05)
    grid = np.linspace(0.0, 1.0, 33)
    base = SynthesisConfig(j_max=12, k_window=50, t_grid=grid, replicates=200)
    big = SynthesisConfig(j_max=14, k_window=80, t_grid=grid, replicates=200)
    lat = NoiseLattice(0)
    x0 = synthesize_mbm(H, base, lat, table)["X"][:, 1:]
    x1 = synthesize_mbm(H, big, lat, table)["X"][:, 1:]
    sd = np.sqrt(np.diag(truncated_covariance(big.with_grid(grid[1:]), table, H=H)))
    assert np.max(np.abs(x1 - x0) / sd) < 1e-3


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SynthesisConfig(j_min=0)
    with pytest.raises(ConfigurationError):
        SynthesisConfig(k_window=7)
    with pytest.raises(ConfigurationError):
        SynthesisConfig(t_grid=[])
    with pytest.raises(ConfigurationError):
        SynthesisConfig(t_grid=[0.5, 0.5])
    with pytest.raises(ConfigurationError):
        SynthesisConfig(replicates=0)


def test_coverage_errors(table):
    with pytest.raises(CoverageError):
        synthesize_field(0.99, small(), NoiseLattice(0), table)
    with pytest.raises(CoverageError):
        synthesize_mbm(HurstFunction.sine(0.5, 0.48), small(), NoiseLattice(0), table)


def test_csv_output(table, tmp_path):
    H = HurstFunction.sine(0.5, 0.1)
    b = synthesize_residual(H, small(reps=3), NoiseLattice(0), table, components=True)
    path = write_paths_csv(b, tmp_path / "paths.csv", preamble=["seed = 0"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed = 0"
    assert lines[1] == "replicate,t,X,Z,R,X_low,X_high,Z_low,Z_high"
    assert len(lines) == 2 + 3 * GRID.size
    row = lines[2 + GRID.size + 2].split(",")
    assert int(row[0]) == 1
    assert float(row[2]) == b["X"][1, 2]
    assert float(row[4]) == b["R"][1, 2]
