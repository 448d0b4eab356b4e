"""
Where the scheme sits in the rate region
========================================

One message per user, one key per user, K-1 independent key symbols in
total. The region's lower bounds are (1, 1, K-1), so every row is a
corner point.
"""

from dsagg import ProtocolParams
from dsagg.verifier import RateTriple, check_rate_region, is_optimal, measure_rates

print(f"{'K':>3} {'R_X':>5} {'R_Z':>5} {'R_ZSigma':>9}  optimal")
for K in range(3, 9):
    params = ProtocolParams.make(K, 0, q=2**16, L=8)
    r = measure_rates(params)
    rep = check_rate_region(params, r)
    print(f"{K:>3} {r.R_X:>5g} {r.R_Z:>5g} {r.R_ZSigma:>9g}  {is_optimal(rep)}")

# A hypothetical scheme with doubled messages is still inside the region,
# just not on its corner.
rep = check_rate_region(ProtocolParams.make(5), RateTriple(2, 2, 9))
print("(2, 2, 9) at K=5: member", rep.passed, "optimal", is_optimal(rep))

rep = check_rate_region(ProtocolParams.make(3), RateTriple(0.5, 1, 2))
print("(0.5, 1, 2) at K=3: member", rep.passed)
