import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from rjlt import deptest as dt
from rjlt import longspan as ls
from rjlt import simkit as sk
from rjlt.models import preset

N_DRAWS = 100_000


def _blocks_with_contrast(s, grid, n_days=25):
    """Constant blocks whose contrast equals ``s`` at every grid point."""
    s = np.broadcast_to(np.asarray(s, float), (len(grid.points),))
    ones = np.ones((n_days, len(grid.points)))
    return ls.BlockStats(grid.points, ones + s / math.sqrt(n_days), ones, ones)


def _mix(eigs, weight=0.01):
    m = np.diag(np.asarray(eigs, float))
    return dt.mixture_from_matrix(m, weight)


class TestGrid:
    def test_default_layout(self):
        g = dt.TestGrid.default()
        assert len(g) == 100
        assert g.cell_weight == pytest.approx(0.01)
        assert (g.points[0].u, g.points[0].v) == pytest.approx((0.1, 0.1))
        assert (g.points[1].u, g.points[1].v) == pytest.approx((0.1, 0.2))
        assert (g.points[-1].u, g.points[-1].v) == pytest.approx((1.0, 1.0))


class TestStatistic:
    grid = dt.TestGrid.default()

    def test_zero(self):
        assert dt.test_statistic(_blocks_with_contrast(0.0, self.grid)) == pytest.approx(0.0, abs=1e-15)

    def test_unit(self):
        assert dt.test_statistic(_blocks_with_contrast(1.0, self.grid)) == pytest.approx(1.0)

    def test_single_cell(self):
        s = np.zeros(100)
        s[37] = 2.0
        assert dt.test_statistic(_blocks_with_contrast(s, self.grid)) == pytest.approx(0.04)

    def test_rejects_wrong_grid(self):
        b = _blocks_with_contrast(0.0, dt.TestGrid.default(n=3))
        with pytest.raises(ValueError):
            dt.test_statistic(b)


class TestLimitCov:
    def test_iid_quadratic_form_oracle(self):
        grid = dt.TestGrid.default(n=2)
        G = len(grid)
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3 * G, 3 * G)) * 0.1
        sigma = a @ a.T + 0.01 * np.eye(3 * G)
        mean = np.concatenate([np.full(G, 0.5), np.full(G, 0.8), np.full(G, 0.6)])
        z = mean + rng.standard_normal((20_000, 3 * G)) @ np.linalg.cholesky(sigma).T
        b = ls.BlockStats(grid.points, z[:, :G], z[:, G : 2 * G], z[:, 2 * G :])
        m = dt.limit_cov_matrix(b, ls.HacConfig(bandwidth=0))
        # gamma(g) = [1, -mean z_y, -mean z_x] acting on (xy, x, y) rows of sigma
        gam = np.zeros((G, 3 * G))
        for g in range(G):
            gam[g, g], gam[g, G + g], gam[g, 2 * G + g] = 1.0, -0.6, -0.8
        oracle = gam @ sigma @ gam.T
        assert_allclose(m, oracle, atol=0.05 * np.abs(oracle).max())

    def test_symmetric_and_projected(self):
        grid = dt.TestGrid.default(n=3)
        rng = np.random.default_rng(1)
        z = rng.standard_normal((3, 30, 9))
        b = ls.BlockStats(grid.points, *z)
        m = dt.limit_cov_matrix(b, ls.HacConfig(bandwidth=2, form="point_swap"))
        assert_array_equal(m, m.T)
        mp = dt.limit_cov_matrix(b, ls.HacConfig(bandwidth=2, form="point_swap"), project=True)
        assert np.all(np.diag(mp) >= 0)
        assert np.linalg.eigvalsh(mp).min() > -1e-12


class TestMixture:
    def test_discards_negative(self):
        mix = _mix([3.0, -1.0, 0.5, -0.2, 0.0])
        assert_allclose(mix.eigenvalues, [3.0, 0.5, 0.0])
        assert mix.n_kept == 3 and mix.n_discarded_negative == 2

    def test_single_eigenvalue_quantile(self):
        mix = _mix([100.0] + [0.0] * 99)
        d = dt.mixture_quantile(mix, 0.05, N_DRAWS, sk.stream(0))
        assert d == pytest.approx(stats.chi2.ppf(0.95, 1), abs=0.05)
        assert d == pytest.approx(3.8415, abs=0.05)

    def test_equal_eigenvalues_quantile(self):
        mix = _mix([1.0] * 100)
        d = dt.mixture_quantile(mix, 0.05, N_DRAWS, sk.stream(1))
        assert d == pytest.approx(stats.chi2.ppf(0.95, 100) / 100, abs=0.01)
        assert d == pytest.approx(1.2434, abs=0.01)

    def test_quantile_decreasing_in_alpha(self):
        mix = _mix([5.0, 2.0, 1.0, 0.1])
        d = [dt.mixture_quantile(mix, a, N_DRAWS, sk.stream(2)) for a in (0.01, 0.05, 0.10)]
        assert d[0] > d[1] > d[2]

    def test_degenerate(self):
        mix = _mix([0.0, -1.0])
        assert mix.degenerate
        assert dt.mixture_quantile(mix, 0.05, N_DRAWS, sk.stream(3)) == 0.0

    def test_draws_independent_of_chunk(self):
        mix = _mix([4.0, 1.0, 0.3])
        a = dt.mixture_draws(mix, 20_000, sk.stream(4), chunk=777)
        b = dt.mixture_draws(mix, 20_000, sk.stream(4), chunk=8192)
        assert_array_equal(a, b)

    def test_rejects_few_draws_and_bad_alpha(self):
        mix = _mix([1.0])
        with pytest.raises(ValueError):
            dt.mixture_quantile(mix, 0.05, 1000, sk.stream(5))
        with pytest.raises(ValueError):
            dt.mixture_quantile(mix, 1.5, N_DRAWS, sk.stream(5))
        with pytest.raises(ValueError):
            dt.p_value(1.0, mix, 10, sk.stream(5))


class TestPValue:
    mix = _mix([2.0, 1.0, 0.5])

    def test_zero_statistic(self):
        assert dt.p_value(0.0, self.mix, 10_000, sk.stream(0)) == 1.0

    def test_infinite_statistic(self):
        assert dt.p_value(math.inf, self.mix, 10_000, sk.stream(0)) == pytest.approx(1 / 10_001)

    def test_self_consistency(self):
        d = dt.mixture_quantile(self.mix, 0.05, N_DRAWS, sk.stream(6))
        p = dt.p_value(d, self.mix, N_DRAWS, sk.stream(7))
        se = math.sqrt(0.05 * 0.95 / N_DRAWS)
        assert abs(p - 0.05) < 2 * se + 2 * se  # quantile noise plus p-value noise


class TestRunTest:
    @pytest.fixture(scope="class")
    @classmethod
    def paths(cls):
        x, y, _ = sk.simulate_paths(preset("ex4"), sk.SimGrid.daily(22, 390), sk.stream(9))
        return x, y

    def test_report_consistency(self, paths):
        r = dt.run_test(*paths, ls.HacConfig(), 0.05, 20_000, sk.stream(1), seed=1)
        assert r.bandwidth == 3 and r.n_days == 22
        assert r.n_kept + r.n_discarded_negative == 100
        assert r.reject == (r.statistic >= r.critical_value)
        assert 0 < r.p_value <= 1
        assert r.eigenvalues == sorted(r.eigenvalues, reverse=True)
        assert r.hac_form == "newey_west" and r.kernel == "bartlett"

    def test_deterministic(self, paths):
        a = dt.run_test(*paths, ls.HacConfig(), 0.05, 20_000, sk.stream(3))
        b = dt.run_test(*paths, ls.HacConfig(), 0.05, 20_000, sk.stream(3))
        assert a == b

    def test_json_round_trip(self, paths):
        r = dt.run_test(*paths, ls.HacConfig(kernel="parzen"), 0.10, 20_000, sk.stream(4), seed=4)
        back = dt.report_from_json(dt.report_to_json(r))
        assert back == r

    def test_summary_row(self, paths):
        r = dt.run_test(*paths, ls.HacConfig(), 0.05, 20_000, sk.stream(5))
        row = dt.summary_row(r, "A-B").strip().split(",")
        assert len(row) == len(dt.SUMMARY_FIELDS)
        assert row[0] == "A-B"
        assert float(row[1]) == r.statistic and float(row[3]) == r.p_value

    def test_rejects_alpha(self, paths):
        with pytest.raises(ValueError):
            dt.run_test(*paths, ls.HacConfig(), 0.0, 20_000, sk.stream(5))

    def test_strong_dependence_rejected(self):
        x, y, _ = sk.simulate_paths(preset("ex4", rho_prime=0.95), sk.SimGrid.daily(66, 390), sk.stream(10))
        r = dt.run_test(x, y, ls.HacConfig(), 0.05, 20_000, sk.stream(11))
        assert r.reject and r.p_value < 0.05
