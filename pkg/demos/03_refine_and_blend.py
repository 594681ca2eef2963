"""
Refinement and the fidelity knob
================================

Best-of-(M+1) selection by the learned reward, then a second policy trained
toward high density and blended with the first through lambda.
"""
import numpy as np

from genpolicy.blend import FidelityTrainer, lambda_sweep
from genpolicy.config import config_from_dict
from genpolicy.evaluate import class_batch
from genpolicy.refine import refine_generate
from genpolicy.training import Trainer

cfg = config_from_dict({"paradigm": "diffusion", "T": 4, "seed": 1,
                        "ppo": {"batch_size": 256, "iterations": 120}, "eval": {"every": 0}})
base = Trainer(cfg).run()
world = base.world
classes = class_batch(world, 500)

for M in (0, 1, 3, 7):
    x, best, _ = refine_generate(world, base.agent, base.reward_model, 4, classes,
                                 np.random.default_rng(2), M=M, beta=0.8)
    nll = np.mean(-world.log_density(x, classes))
    print(f"M={M}: mean reward {best.mean():.3f}, true nll {nll:.3f}")

# lambda = 0 is the original agent, lambda = 1 the fidelity one
fid = FidelityTrainer(base).run(100)
for row in lambda_sweep(fid, (0.0, 0.25, 0.5, 0.75, 1.0), 1000, seed=0):
    print(f"lambda={row['lambda']:.2f} fidelity={row['fidelity']:.3f} "
          f"mode_cov={row['mode_cov']:.2f} frechet={row['frechet']:.3f}")
