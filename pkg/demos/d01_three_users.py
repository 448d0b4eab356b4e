"""
Three users, one bit each
=========================

Walk through a single round by hand: the dealer's noise, the masks it
derives, what each user broadcasts and how everyone ends up with the sum.
"""

from dsagg import ProtocolParams, RingVector, SourceKey, UserState, derive_keys

params = ProtocolParams.make(K=3, T=0, q=2, L=1)

# The dealer draws K-1 = 2 noise vectors; the last mask cancels them out.
noise = (RingVector.of(2, [1]), RingVector.of(2, [0]))
keys = derive_keys(SourceKey(params, noise))
print("masks:", [k.mask.coords for k in keys])

inputs = [RingVector.of(2, [b]) for b in (1, 0, 1)]
users = [UserState(k, params, w, z) for k, w, z in zip(params.users, inputs, keys)]

# Everyone broadcasts input + mask. Here every message happens to be 0,
# even though two of the inputs are 1.
messages = [u.make_message() for u in users]
print("broadcast:", [m.payload.coords for m in messages])

for u in users:
    for m in messages:
        if m.sender != u.user_id:
            u.accept_message(m)

for u in users:
    r = u.recover_sum()
    print(f"user {r.recovered_by} recovers {r.value.coords}")

# 1 + 0 + 1 = 0 over Z_2
