"""Truncation sizes and query costs for a target accuracy.

Costs are order-of-magnitude figures; constant factors are not tracked.
"""

from kvnsim import KuramotoSpec, make_kuramoto
from kvnsim.estimator import COST_CAVEAT, estimate

system, _ = make_kuramoto(KuramotoSpec.all_to_all((1.0, 1.3), 0.5))
print(f"all costs {COST_CAVEAT}")
print(f"{'eps':>8} {'n0':>5} {'m':>5} {'queries':>10} {'classical':>10} certified")
# at moderate eps the horizon term fixes n0; the log(1/eps) growth shows further out
for eps in (1e-2, 1e-8, 1e-40, 1e-100, 1e-200):
    row = estimate(system, 1, eps, 1.0)
    print(f"{eps:8.0e} {row['n0']:5d} {row['m']:5d} {row['queries']:10.3g} {row['classical']:10.3g} {row['inequalities_hold']}")
