"""Realized joint Laplace transforms of two volatility processes.

Simulation of bivariate stochastic-volatility jump-diffusions, the RJLT
estimators and their plug-in variances, daily-block long-span statistics
with HAC covariances, and a test of independence between the two
volatilities.
"""

from .asymptotics import CovQuery, StudentizedStat, f_cov_u, f_cov_v, gamma_hat_u, gamma_hat_v, studentize
from .deptest import MixtureSpec, TestGrid, TestReport, mixture_quantile, p_value, run_test, test_statistic
from .estimators import LaplacePoint, RjltEstimate, u_async_hat, u_hat, v_hat, v_prime_hat
from .longspan import BlockStats, HacConfig, daily_blocks, hac_cov, s_stat
from .models import PRESETS, preset
from .simkit import BivariateModelSpec, SamplePath, SimGrid, VolPath, simulate_paths, stream, true_elt

__version__ = "0.1.0"
