"""
Aggregators under gradient inversion
====================================

A least-squares task with a known optimum, ten participants, and a growing
share of participants who submit the negated version of their honestly
trained model. The table shows the final squared distance to the optimum
and how often attackers made it into the aggregate.
"""
from dsfl.harness import ExperimentConfig, compare_matrix

base = ExperimentConfig(task="quadratic", adversary="inversion", rounds=100, seed=0)
aggregators = ["fedavg", "median", "trimmed_mean", "krum", "dsfl"]
betas = [0.0, 0.1, 0.2, 0.3]

###############################################################################
# Each cell is an independent seeded run.
rows = compare_matrix(base, aggregators, betas)
print(f"{'aggregator':>13} {'beta':>5} {'dist_to_opt':>12} {'attacker rate':>14} {'active':>6}")
for r in rows:
    print(f"{r['aggregator']:>13} {r['byz_fraction']:>5.1f} {r['dist_to_opt']:>12.3g} "
          f"{r['mean_attacker_success_rate']:>14.2f} {r['active_participants']:>6}")

###############################################################################
# The group score compares each group mean against the global mean, and that
# global mean already includes the attackers. With one inverted update out of
# ten the honest groups sit closest and the attacker is voted out within a few
# rounds. With two or three, a group holding one attacker can land nearer the
# contaminated mean than a clean group does, so the score stops separating the
# two populations.
