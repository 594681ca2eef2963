"""
Learning a step-wise policy
===========================

PPO against an adversarial reward on the mixture world at T=4. The static
schedule the agent starts from is the comparison point.
"""
import numpy as np

from genpolicy.config import config_from_dict
from genpolicy.training import Trainer

cfg = config_from_dict({
    "paradigm": "diffusion", "T": 4, "seed": 0,
    "ppo": {"batch_size": 256, "iterations": 120},
    "eval": {"every": 20, "samples": 500},
})
trainer = Trainer(cfg)

# a fresh agent reproduces the default schedule exactly
before = trainer.evaluate(2000, np.random.default_rng(5))[0]["frechet"]

trainer.run()
for row in trainer.history[::20]:
    print(row["iteration"], round(row["mean_reward"], 3), row["eval_metric"])

after = trainer.evaluate(2000, np.random.default_rng(5))[0]["frechet"]
print(f"frechet: initial schedule {before:.3f} -> trained policy {after:.3f}")

# the actions the trained agent picks for a handful of samples
from genpolicy.evaluate import generate

_, ro = generate(trainer.world, trainer.agent, 4, [0, 1, 2, 3], np.random.default_rng(0), 0.8)
for t, a in enumerate(ro.actions):
    print("step", t, "kappa", a["kappa"], "w", np.round(a["w"], 2))
