"""Error scaling when the number of groups grows like n**0.4.

The statistic ||beta_hat - beta0|| / sqrt(p/n) should stay bounded as n grows.
gamma = 2 is needed: with gamma = 1 and no signal decay the admissible
exponent interval for c = 0.4 is empty.
"""

import numpy as np

from fgql.simulation import growth_scenario, run_rate_study
from fgql.weights import default_schedule

scenario = growth_scenario(c=0.4)
schedule, _ = default_schedule(400, gamma=2.0, regime="growing_p", c=0.4, alpha=0.0)
print(f"exponent e = {schedule.exponent}")

report = run_rate_study(scenario, schedule, replications=20, ns=(400, 1600))
for n, p, med, scaled in zip(report.ns, report.p, report.median_error, report.scaled_error):
    print(f"n={n:5d} p={p:3d} median error {med:.4f}  scaled {scaled:.3f}")
print(f"last/first ratio {report.rate_ratio:.3f}")
print("nonconverged fits:", report.nonconverged, "failures:", report.failures)
assert np.isfinite(report.rate_ratio)
