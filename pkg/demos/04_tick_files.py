"""
From tick files to a p-value matrix
===================================

Intraday prices arrive as one ``timestamp,price`` file per asset. Here four
such files are written from simulated paths: three independent assets and a
fourth sharing its volatility factor with the first. The pairwise runner
aligns every pair on a regular grid per session and tests each one.
"""

import tempfile
from pathlib import Path

import numpy as np

from rjlt import harness as hx
from rjlt import simkit as sk
from rjlt.models import preset

N_DAYS, STEPS = 66, 390


def write_ticks(path, values):
    with open(path, "w") as fh:
        fh.write("timestamp,price\n")
        for d in range(N_DAYS):
            # sessions cover 09:30-16:00 of day d
            ts = d + np.linspace(9.5, 16.0, STEPS + 1) / 24
            for t, v in zip(ts, values[d * STEPS : (d + 1) * STEPS + 1]):
                fh.write(f"{float(t)!r},{float(np.exp(v))!r}\n")


workdir = Path(tempfile.mkdtemp())
model = preset("ex4", rho_prime=0.95)
for k, name in enumerate(["AAA", "BBB", "CCC"]):
    x, y, _ = sk.simulate_paths(model, sk.SimGrid.daily(N_DAYS, STEPS), sk.stream(100 + k))
    write_ticks(workdir / f"{name}.csv", x.values)
    if name == "AAA":
        # DDD is the other leg of the same draw: its volatility factor shares AAA's shocks
        write_ticks(workdir / "DDD.csv", y.values)

# Simulated returns are already on a unit scale, so no rescaling is needed.
series = [hx.ingest_csv(f, rescale_factor=1.0) for f in sorted(workdir.glob("*.csv"))]
res = hx.pairwise_test_matrix(series, hx.PairwiseConfig(steps_per_day=STEPS))

for pr in res.pairs:
    print(f"{pr.symbol_i}/{pr.symbol_j}  statistic {pr.report.statistic:.5f}  p {pr.report.p_value:.4f}")
print(f"\nfiles in {workdir}")
