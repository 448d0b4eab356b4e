"""
Checking security by enumerating every world
============================================

For small parameters the joint distribution of inputs, keys and messages
can be tabulated exactly. Independence is then an integer identity on
counts, with no floating point involved.
"""

from dsagg import ProtocolParams
from dsagg.oracle import (
    WorldSpace,
    conditional_mi_bits,
    entropy_bits,
    input_sum_var,
    input_var,
    key_var,
    message_var,
    tabulate,
)
from dsagg.verifier import check_security, run_checks, summary_table

params = ProtocolParams.make(K=4, T=1, q=2, L=1)
space = WorldSpace(params)
print("worlds:", space.world_count)

vs = [input_var(k) for k in params.users] + [key_var(k) for k in params.users]
vs += [message_var(k) for k in params.users] + [input_sum_var()]
d = tabulate(space, vs)

# What user 1 learns about the others' inputs from their messages,
# once the sum is known: nothing.
others_x = ["X2", "X3", "X4"]
others_w = ["W2", "W3", "W4"]
print("I(X_others; W_others | sum, W1, Z1) =",
      conditional_mi_bits(d, others_x, others_w, ["SumW", "W1", "Z1"]))

# Without the sum, the messages reveal exactly one input's worth: the sum itself.
print("I(X_others; W_others | W1, Z1) =", conditional_mi_bits(d, others_x, others_w, ["W1", "Z1"]))
print("H(Z1..Z4) =", entropy_bits(d, ["Z1", "Z2", "Z3", "Z4"]))

report = check_security(params)
print(f"{report.name}: {len(report.instances)} instances, passed={report.passed}")

print(summary_table(run_checks(params)))
