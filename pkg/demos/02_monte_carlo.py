"""
Bias and spread over replications
=================================

A small fixed-span experiment: 200 replications of one day under the
Poisson-jump model. Every replication draws from its own seeded stream, so
the numbers below do not depend on the worker count.
"""

from rjlt import harness as hx

cfg = hx.McConfig(dgp="ex2", n_reps=200, n_steps=1760, laplace_points=((2.5, 2.75), (4.5, 4.75)))
rows = hx.run_table1(cfg)

print(f"{'kind':7s} {'u':>4s} {'v':>5s} {'bias':>9s} {'sd':>8s} {'mse':>9s}")
for r in rows:
    print(f"{r.estimator_kind:7s} {r.u:4.1f} {r.v:5.2f} {r.bias:+9.5f} {r.sd:8.5f} {r.mse:9.6f}")

# Studentized errors should look standard normal. A coarse text histogram
# of the overlapped estimator makes the point without a plotting library.
z, flagged = hx.studentized_samples(hx.McConfig(dgp="ex3", n_reps=400, laplace_points=((3.5, 3.75),)))
zu = z[~flagged[:, 1, 0], 1, 0]
print(f"\nstudentized U: mean {zu.mean():+.3f}, sd {zu.std(ddof=1):.3f}")
for row in hx.emit_histogram(zu, 12, (-3, 3)):
    print(f"[{row.bin_left:+.1f}, {row.bin_right:+.1f})  {'#' * row.count}")
