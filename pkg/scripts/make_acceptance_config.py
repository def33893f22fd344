"""Write the reference constrained-bandit config used by the acceptance sweep.

Four contexts, three actions, eight-member Bernoulli classes for rewards and
costs.  Action 0 is the safe action with a known cost shared by every
constraint member.
"""

import argparse
import json
from pathlib import Path

import numpy as np

N_CTX, K, CARD = 4, 3, 8
SAFE_COST, TAU = 0.05, 0.5
TRUE_REWARD = (0.1, 0.6, 0.9)
TRUE_COST = (SAFE_COST, 0.1, 0.9)
PESSIMISTIC_COST = 0.95


def build(seed: int = 1) -> dict:
    """Member 0 is the truth; the other cost members are pessimistic about action 1.

    Until those members are ruled out, the worst-case constraint forces heavy
    use of the safe action, so the run has a costly cautious phase followed by
    a cheaper one once the constraint confidence set has shrunk.
    """
    rng = np.random.default_rng(seed)
    reward = np.empty((CARD, N_CTX, K))
    cost = np.empty((CARD, N_CTX, K))
    reward[0] = np.array(TRUE_REWARD) + rng.uniform(-0.03, 0.03, size=(N_CTX, K))
    cost[0] = np.array(TRUE_COST) + rng.uniform(-0.03, 0.03, size=(N_CTX, K))
    for m in range(1, CARD):
        reward[m] = rng.uniform(0.1, 0.9, size=(N_CTX, K))
        cost[m] = rng.uniform(0.5, 0.95, size=(N_CTX, K))
        cost[m, :, 1] = PESSIMISTIC_COST
    reward[:, :, 0] = TRUE_REWARD[0]
    cost[:, :, 0] = SAFE_COST
    return {
        "env": {
            "type": "constrained_bandit",
            "reward_means": reward[0].round(4).tolist(),
            "cost_means": cost[0].round(4).tolist(),
            "tau": TAU,
            "safe_action": 0,
            "noise": "bernoulli",
        },
        "utility_class": {"type": "bernoulli", "means": reward.round(4).tolist()},
        "constraint_class": {"type": "bernoulli", "means": cost.round(4).tolist()},
        "oracle": "mle",
        "divergence": "hellinger",
        "delta": 0.1,
        "T": 500,
        "m": 50,
        "seed": 0,
    }


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs" / "acceptance_bandit.json"))
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    Path(args.out).write_text(json.dumps(build(args.seed), indent=1) + "\n")
    print(args.out)
