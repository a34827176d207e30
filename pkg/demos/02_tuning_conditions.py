"""Which tuning exponents are admissible?

Tuning parameters grow like ``kappa * n**e``.  Only the exponent matters for
the large-sample guarantees; this script tabulates the admissible interval
for a few weight exponents gamma, in both regimes.
"""

from fgql.weights import TuningSchedule, exponent_bounds, validate_schedule

print("fixed number of groups")
for gamma in (0.5, 1.0, 2.0):
    lo, hi = exponent_bounds(gamma, "fixed_p")
    print(f"  gamma={gamma}: {lo} < e < {hi}")

print("number of groups ~ n**c (signal may decay like n**-alpha)")
for gamma, c, alpha in [(1.0, 0.4, 0.1), (2.0, 0.4, 0.0), (1.0, 0.2, 0.0), (3.0, 0.5, 0.1)]:
    lo, hi = exponent_bounds(gamma, "growing_p", c, alpha)
    verdict = "empty" if lo >= hi else f"{lo} < e < {hi}"
    print(f"  gamma={gamma}, c={c}, alpha={alpha}: {verdict}")

# the full record for one schedule; constants never change the verdict
for kappa in (0.1, 1.0, 10.0):
    records = validate_schedule(TuningSchedule(0.25, 1.0, "fixed_p", kappa=kappa))
    print(f"kappa={kappa}:", [(r.name, r.satisfied) for r in records])

print("growing regime with c = alpha = 0 collapses to the fixed regime:")
for rec in validate_schedule(TuningSchedule(0.25, 1.0, "growing_p", 0.0, 0.0)):
    print(f"  {rec.name:24s} {rec.inequality:45s} {rec.satisfied}")
