import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from rjlt import longspan as ls
from rjlt import simkit as sk
from rjlt.models import preset


def _brownian_days(n_days, m, rho, seed):
    rng = np.random.default_rng(seed)
    n = n_days * m
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal(n)
    t = np.linspace(0.0, n_days, n + 1)
    sq = math.sqrt(1.0 / m)
    x = sk.SamplePath(t, np.concatenate([[0.0], np.cumsum(z1) * sq]))
    y = sk.SamplePath(t, np.concatenate([[0.0], np.cumsum(z2) * sq]))
    return x, y


def _inject(z_xy, z_x, z_y, grid=((0.5, 0.5),)):
    return ls.BlockStats(grid, np.asarray(z_xy, float), np.asarray(z_x, float), np.asarray(z_y, float))


def _ar1(n, phi, rng):
    e = rng.standard_normal(n) * math.sqrt(1 - phi * phi)
    out = np.empty(n)
    out[0] = rng.standard_normal()
    for t in range(1, n):
        out[t] = phi * out[t - 1] + e[t]
    return out


def _ex4_blocks(rho_prime, n_days, m, seed, grid=((0.5, 0.5),)):
    x, y, _ = sk.simulate_paths(preset("ex4", rho_prime=rho_prime), sk.SimGrid.daily(n_days, m), sk.stream(seed))
    return ls.daily_blocks(x, y, grid)


class TestDailyBlocks:
    def test_zero_point(self):
        x, y = _brownian_days(5, 40, 0.5, 0)
        b = ls.daily_blocks(x, y, [(0, 0)])
        assert_allclose(b.z_x, 1.0)
        assert_allclose(b.z_y, 1.0)
        # the globally last X increment has no partner
        assert_allclose(b.z_xy[:-1, 0], 1.0)
        assert b.z_xy[-1, 0] == pytest.approx(39 / 40)

    def test_no_cross_day_pairs(self):
        x, y = _brownian_days(5, 40, 0.5, 0)
        b = ls.daily_blocks(x, y, [(0, 0)], cross_day_pairs=False)
        assert_allclose(b.z_xy, 39 / 40)

    def test_explicit_sums(self):
        x, y = _brownian_days(3, 8, 0.3, 1)
        dx, dy, dt = x.increments, y.increments, 1 / 8
        u, v = 0.7, 1.9
        b = ls.daily_blocks(x, y, [(u, v)])
        for t in range(3):
            idx = range(8 * t, 8 * t + 8)
            zxy = dt * sum(
                math.cos((math.sqrt(2 * u) * dx[i] + math.sqrt(2 * v) * dy[i + 1]) / math.sqrt(dt))
                for i in idx
                if i + 1 < len(dy)
            )
            zx = dt * sum(math.cos(math.sqrt(2 * u) * dx[i] / math.sqrt(dt)) for i in idx)
            zy = dt * sum(math.cos(math.sqrt(2 * v) * dy[i] / math.sqrt(dt)) for i in idx)
            assert_allclose([b.z_xy[t, 0], b.z_x[t, 0], b.z_y[t, 0]], [zxy, zx, zy], atol=1e-13)

    def test_grid_order_preserved(self):
        x, y = _brownian_days(4, 20, 0.5, 2)
        grid = [(1.0, 0.2), (0.1, 0.9), (0.5, 0.5)]
        b = ls.daily_blocks(x, y, grid)
        for k, p in enumerate(grid):
            single = ls.daily_blocks(x, y, [p])
            assert_allclose(b.z_xy[:, k], single.z_xy[:, 0], atol=1e-14)
            assert_allclose(b.z_x[:, k], single.z_x[:, 0], atol=1e-14)
        assert b.index((0.1, 0.9)) == 1
        with pytest.raises(KeyError):
            b.index((3.0, 3.0))

    def test_constant_vol_marginal_oracle(self):
        x, y = _brownian_days(50, 100, 0.5, 3)
        zx = ls.daily_blocks(x, y, [(0.5, 0.5)]).z_x[:, 0]
        se = zx.std(ddof=1) / math.sqrt(len(zx))
        assert abs(zx.mean() - math.exp(-0.5)) < 3 * se

    def test_rejects_partial_days(self):
        t = np.linspace(0, 2.5, 26)
        x = sk.SamplePath(t, np.zeros(26))
        with pytest.raises(ValueError):
            ls.daily_blocks(x, x, [(1, 1)])

    def test_warns_on_coarse_sampling(self, caplog):
        x, y = _brownian_days(30, 10, 0.0, 4)
        with caplog.at_level("WARNING", logger="rjlt.longspan"):
            ls.daily_blocks(x, y, [(1, 1)])
        assert "long-span" in caplog.text

    def test_independent_factors_center_contrast(self):
        b = _ex4_blocks(0.0, 100, 78, 5)
        d = b.z_xy[:, 0] - b.z_x[:, 0] * b.z_y[:, 0]
        d = d - d.mean() + (b.z_xy[:, 0].mean() - b.z_x[:, 0].mean() * b.z_y[:, 0].mean())
        se = d.std(ddof=1) / math.sqrt(len(d))
        assert abs(ls.s_stat(b, 0) / math.sqrt(100)) < 3 * se + 0.01


class TestKernelWeights:
    def test_values(self):
        bart = ls.HacConfig("bartlett")
        parz = ls.HacConfig("parzen")
        assert ls.kernel_weight(bart, 0, 5) == 1.0
        assert ls.kernel_weight(bart, 1, 1) == 0.5
        assert ls.kernel_weight(parz, 2, 3) == pytest.approx(0.25)
        assert ls.kernel_weight(parz, 0, 3) == 1.0

    @pytest.mark.parametrize("kernel", ["bartlett", "parzen"])
    @pytest.mark.parametrize("L", [1, 4, 17])
    def test_bounded_and_decreasing(self, kernel, L):
        w = [ls.kernel_weight(ls.HacConfig(kernel), i, L) for i in range(L + 1)]
        assert w[0] == 1.0
        assert all(0 <= a <= 1 for a in w)
        assert all(a >= b for a, b in zip(w, w[1:]))

    def test_bandwidth_rule(self):
        assert ls.default_bandwidth(22) == 3
        assert ls.default_bandwidth(66) == 4
        assert ls.default_bandwidth(1000) == 12
        assert ls.HacConfig(bandwidth=7).resolve(1000) == 7

    def test_rejects(self):
        with pytest.raises(ValueError):
            ls.HacConfig("quadratic")
        with pytest.raises(ValueError):
            ls.HacConfig(bandwidth=-1)
        with pytest.raises(ValueError):
            ls.HacConfig(form="other")
        with pytest.raises(ValueError):
            ls.kernel_weight(ls.HacConfig(), 4, 3)


class TestHac:
    def test_zero_bandwidth_is_lag_zero(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((3, 200))
        b = _inject(*z)
        v = ls.hac_cov(b, ls.HacConfig(bandwidth=0), 0, 0).matrix
        assert_allclose(v, np.cov(z, bias=True), atol=1e-14)

    def test_iid_long_run_variance(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((3, 10_000))
        v = ls.hac_cov(_inject(*z), ls.HacConfig(bandwidth=3), 0, 0).matrix
        assert v[0, 0] == pytest.approx(1.0, abs=0.1)
        assert_allclose(v, np.eye(3), atol=0.1)

    def test_ar1_long_run_variance(self):
        rng = np.random.default_rng(2)
        z = np.stack([_ar1(100_000, 0.5, rng) for _ in range(3)])
        v = ls.hac_cov(_inject(*z), ls.HacConfig(bandwidth=50), 0, 0).matrix
        assert v[0, 0] == pytest.approx(3.0, rel=0.1)

    def test_iid_expected_value_band(self):
        # over replications the estimate centres on the marginal covariance (up to the 1 - L/T bias)
        rng = np.random.default_rng(3)
        sig = np.array([[1.0, 0.5, 0.2], [0.5, 2.0, 0.0], [0.2, 0.0, 1.5]])
        c = np.linalg.cholesky(sig)
        est = []
        for _ in range(300):
            z = c @ rng.standard_normal((3, 400))
            est.append(ls.hac_cov(_inject(*z), ls.HacConfig(bandwidth=4), 0, 0).matrix)
        est = np.array(est)
        se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
        assert np.all(np.abs(est.mean(axis=0) - sig) < 4 * se + 0.02)

    @pytest.mark.parametrize("form", ["newey_west", "point_swap"])
    def test_transpose_symmetry(self, form):
        rng = np.random.default_rng(4)
        grid = ((0.5, 0.5), (1.0, 0.2), (0.3, 0.8))
        b = _inject(*rng.standard_normal((3, 60, 3)), grid=grid)
        v = ls.hac_cov_all(b, ls.HacConfig(bandwidth=3, form=form))
        for g in range(3):
            for h in range(3):
                assert_array_equal(v[:, g, :, h], v[:, h, :, g].T)
        assert_allclose(ls.hac_cov(b, ls.HacConfig(bandwidth=3, form=form), 1, 2).matrix, v[:, 1, :, 2])

    def test_newey_west_is_psd(self):
        rng = np.random.default_rng(5)
        grid = ((0.5, 0.5), (1.0, 0.2), (0.3, 0.8), (0.9, 0.9))
        b = _inject(*np.cumsum(rng.standard_normal((3, 40, 4)), axis=1) * 0.1, grid=grid)
        v = ls.hac_cov_all(b, ls.HacConfig(bandwidth=5)).reshape(12, 12)
        assert np.linalg.eigvalsh(v).min() > -1e-12

    def test_forms_agree_on_single_point(self):
        rng = np.random.default_rng(6)
        b = _inject(*rng.standard_normal((3, 80)))
        nw = ls.hac_cov(b, ls.HacConfig(bandwidth=3), 0, 0).matrix
        ps = ls.hac_cov(b, ls.HacConfig(bandwidth=3, form="point_swap"), 0, 0).matrix
        assert_allclose(np.diag(nw), np.diag(ps), atol=1e-14)

    def test_rejects_large_bandwidth(self):
        b = _inject(*np.zeros((3, 5)))
        with pytest.raises(ValueError):
            ls.hac_cov(b, ls.HacConfig(bandwidth=5), 0, 0)


class TestContrast:
    def test_gamma_zero_point(self):
        x, y = _brownian_days(4, 50, 0.5, 7)
        b = ls.daily_blocks(x, y, [(0, 0)])
        assert_allclose(ls.gamma_vec(b, 0), [1, -1, -1])

    def test_gamma_constant_vol(self):
        x, y = _brownian_days(200, 50, 0.5, 8)
        b = ls.daily_blocks(x, y, [(0.5, 0.5)])
        g = ls.gamma_vec(b, (0.5, 0.5))
        assert_allclose(g, [1, -math.exp(-0.5), -math.exp(-0.5)], atol=0.01)

    def test_product_identity_gives_zero(self):
        n = 30
        b = _inject(np.full(n, 0.6), np.full(n, 0.75), np.full(n, 0.8))
        assert ls.s_stat(b, 0) == pytest.approx(0.0, abs=1e-14)

    def test_zero_point_small(self):
        x, y = _brownian_days(20, 100, 0.5, 9)
        b = ls.daily_blocks(x, y, [(0, 0)])
        assert abs(ls.s_stat(b, 0)) <= math.sqrt(20) * 0.01

    def test_rejects_single_day(self):
        b = _inject([0.5], [0.5], [0.5])
        with pytest.raises(ValueError):
            ls.s_stat(b, 0)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_level_shift_invariance(self, cx, cy):
        x, y = _brownian_days(5, 20, 0.5, 10)
        x2 = sk.SamplePath(x.times, x.values + cx)
        y2 = sk.SamplePath(y.times, y.values + cy)
        a = ls.s_stat(ls.daily_blocks(x, y, [(0.5, 0.5)]), 0)
        b = ls.s_stat(ls.daily_blocks(x2, y2, [(0.5, 0.5)]), 0)
        assert a == pytest.approx(b, abs=1e-9)

    def test_dependence_raises_contrast(self):
        # paired paths: the same seed drives both correlations
        wins = 0
        for r in range(40):
            s0 = ls.s_stat(_ex4_blocks(0.0, 66, 780, 100 + r), 0)
            s8 = ls.s_stat(_ex4_blocks(0.8, 66, 780, 100 + r), 0)
            wins += abs(s8) > abs(s0)
        assert wins >= 38

    @pytest.mark.slow
    def test_contrast_variance_stabilises(self):
        var = []
        for T in (22, 44, 88):
            s = [ls.s_stat(_ex4_blocks(0.0, T, 390, 1000 * T + r), 0) for r in range(200)]
            var.append(np.var(s, ddof=1))
        for a, b in zip(var, var[1:]):
            assert 0.6 <= b / a <= 1.6


class TestBlocksCsv:
    def test_round_trip(self):
        x, y = _brownian_days(3, 10, 0.5, 11)
        b = ls.daily_blocks(x, y, [(0.5, 0.5), (1.0, 0.1)])
        buf = io.StringIO()
        ls.write_blocks_csv(b, buf)
        buf.seek(0)
        back = ls.read_blocks_csv(buf)
        assert back.grid == b.grid
        assert_array_equal(back.z_xy, b.z_xy)
        assert_array_equal(back.z_y, b.z_y)

    def test_rejects_incomplete(self):
        text = "day,u,v,z_xy,z_x,z_y\n1,0.5,0.5,1,1,1\n2,0.5,0.5,1,1,1\n1,1.0,0.5,1,1,1\n"
        with pytest.raises(ValueError):
            ls.read_blocks_csv(io.StringIO(text))
        with pytest.raises(ValueError):
            ls.read_blocks_csv(io.StringIO("day,u,v,z_xy,z_x,z_y\n"))
