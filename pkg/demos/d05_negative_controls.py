"""
Making the verifier fail on purpose
===================================

A verifier that always passes proves nothing. Each broken scheme below
removes one ingredient of the real construction and should be caught.
"""

from dsagg import ProtocolParams
from dsagg.verifier import NONZERO_SUM, SHARED_NOISE, ZERO_KEYS, run_checks

params = ProtocolParams.make(K=4, T=1, q=2, L=1)

for scheme in (None, ZERO_KEYS, SHARED_NOISE, NONZERO_SUM):
    reports = run_checks(params, ["recovery", "security", "lemma2", "source_key"], scheme=scheme)
    name = reports[0].params["scheme"]
    verdicts = ", ".join(f"{r.name}={'PASS' if r.passed else 'FAIL'}" for r in reports)
    print(f"{name:<12} {verdicts}")

# zero keys: messages are the raw inputs, so security and independence fail
# shared noise: one key symbol short, some user's view leaks
# nonzero sum: masks no longer cancel, so nobody recovers the sum
