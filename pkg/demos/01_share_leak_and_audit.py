"""
Why one server report is enough to unmask everyone
==================================================

Two servers each hold one additive share of every update. In the original
two-server scheme, SP sends TP a per-participant vector ``d_i``. Differences
of those vectors are differences of SP-shares, so a single participant who
hands TP its own SP-share lets TP solve for all the rest.

The grouped scheme only ever moves group sums between servers, and this
script checks that those sums leave the individual shares underdetermined.
"""
import numpy as np

from dsfl.analysis import lsfl_recover_updates, pcm_rank, recovery_audit, witness_is_valid
from dsfl.baselines import lsfl_round
from dsfl.grouping import build_pcm, group_share_sums

rng = np.random.default_rng(2024)

###############################################################################
# Ten participants, 32 parameters each. Participant 0 colludes with TP.
updates = list(rng.normal(size=(10, 32)))
out = lsfl_round(updates, noise_std=20.0, rng=rng)
recovered = lsfl_recover_updates(out.d_report, out.tp_shares, out.sp_shares[0], 0)
err = max(np.max(np.abs(r - u)) for r, u in zip(recovered, updates[1:]))
print(f"recovered {len(recovered)} private updates, max error {err:.1e}")

###############################################################################
# Now the grouped layout: 7 groups (the first one holds everybody) of three.
# TP's group sums give 7 equations for 10 unknown shares.
pcm = build_pcm(10, 7, 3, rng)
print(pcm.membership)
rank, null = pcm_rank(pcm)
print(f"rank {rank}, nullspace dimension {null}")

###############################################################################
# The audit tries least squares, then shows two different share assignments
# that reproduce every sum TP has seen.
shares = list(rng.normal(size=(10, 32)) * 20)
sums = group_share_sums(pcm, shares)
verdict = recovery_audit(pcm, sums)
a, b = verdict.witness
print(f"verdict: {verdict.kind}; witness valid: {witness_is_valid(pcm, sums, verdict)}; "
      f"assignments differ by up to {np.max(np.abs(a - b)):.2f}")
