"""
Credit balances over a training run
===================================

Selected participants earn ``reward - cost`` per round. Everybody else who is
still active pays ``penalty + cost``. A negative balance evicts a participant
permanently.
"""
import numpy as np

from dsfl.harness import ExperimentConfig, build_adversary, build_task
from dsfl.protocol import CreditLedger, RoundConfig, credit_update, run_training

###############################################################################
# With the defaults (start 10, reward 2, penalty 2, cost 1) a participant that
# is never selected drops 10, 7, 4, 1, -2 and leaves after round four.
cfg = RoundConfig()
ledger = CreditLedger.start([0, 1], cfg.credit_init)
for t in range(1, 5):
    ledger = credit_update(ledger, [1], cfg)
    print(t, ledger.balances, sorted(ledger.active))

###############################################################################
# The same ledger inside a real run with two Gaussian free-riders.
exp = ExperimentConfig(adversary="free_rider", byz_fraction=0.2, rounds=40, seed=3)
adv = build_adversary(exp)
hist = run_training(exp.round_config(), build_task(exp), adv, exp.rounds)
print("free-riders:", sorted(adv.member_ids))
for rec in hist[::5]:
    bal = np.array([rec.ledger.balances[i] for i in range(10)])
    print(f"round {rec.round:3d} active={len(rec.ledger.active):2d} balances={np.round(bal, 0)}")
