"""Monte Carlo: how often is the true group set selected, and the equal groups fused?

A reduced version of the acceptance study (40 replications instead of
200).  Set FGQL_THREADS to use more processes.
"""

from fgql.simulation import (
    acceptance_scenario,
    normality_report,
    run_replications,
    selection_report,
)
from fgql.weights import default_schedule

scenario = acceptance_scenario()
schedule, _ = default_schedule(800, 1.0)
ns = (200, 400, 800)
reps = 40

outcomes = run_replications(scenario, schedule, ns, reps)
sel = selection_report(scenario, schedule, ns, reps, outcomes)
norm = normality_report(scenario, schedule, ns, reps, outcomes)

print(" n    select  fuse   var(sqrt n err)  theory  coverage")
for i, n in enumerate(ns):
    print(f"{n:4d}  {sel.selection_rate[i]:.3f}   {sel.fusion_rate[i]:.3f}  "
          f"{norm.empirical_variance[i]:8.3f}        {norm.theoretical_variance[i]:.3f}   "
          f"{norm.coverage[i]:.3f}")

# The variance column sits near half the theory column.  Once groups 1 and 2
# are fused their common value is estimated from both groups' columns, which
# halves the variance of each coordinate compared with the unfused oracle.
