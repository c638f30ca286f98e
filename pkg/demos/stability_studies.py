# # Stability of local explanations
#
# Four small studies on MiniPac: how fast local spaces grow, what sampling
# out-path targets costs in accuracy and time, how much the horizon N
# matters, and how small board perturbations move the result. Takes about
# a minute on one core.
#
#     python3 demos/stability_studies.py

# In[1]:

import warnings

import numpy as np

from ssx.env import minipac_env, random_live_states
from ssx.evalharness import (
    growth_study,
    horizon_faithfulness,
    perturbation_stability,
    sampling_study,
    trajectory_roots,
)
from ssx.pipeline import minipac_params
from ssx.policy import scripted_minipac_policy

warnings.simplefilter("ignore", RuntimeWarning)
params = minipac_params()


# ## Growth of the local space
# Worst case is 5^N boards; duplicates keep the real count far lower.

# In[2]:

env = minipac_env()
roots = random_live_states(env, 100, np.random.default_rng(0))
for n, mean in growth_study(env, roots, 8):
    print(f"N={n}: {mean:8.1f} boards  (3^N = {3 ** n})")


# ## Sampled out-path counts
# Walking half of the targets should roughly halve the counting time while
# barely moving the priority board.

# In[3]:

policy = scripted_minipac_policy(env)
eat_roots = random_live_states(env, 10, np.random.default_rng(0), min_ghost_distance=3,
                               pill_eaten=False)
exact, half = sampling_study(env, policy, eat_roots, [1.0, 0.5], params=params)
print(f"displacement {half.displacement:.2f} cells, time ratio {half.time_ratio:.2f}")


# ## Horizon and perturbations
# Boards are taken along a HUNT rollout from the start position.

# In[4]:

hunt = minipac_env(scheme="HUNT")
hpol = scripted_minipac_policy(hunt)
hroots = trajectory_roots(hunt, hpol, 10, seed=0)
table = horizon_faithfulness(hunt, hpol, hroots, [3, 4, 5, 6], params)
np.set_printoptions(precision=2)
print("agent distances by (N_i, N_j):\n", table.tables["agent"])
print(f"spearman vs |dN| = {table.spearman('agent'):.2f}; "
      f"mean agent {table.mean('agent'):.2f}, ghost {table.mean('ghost'):.2f}")


# In[5]:

rep = perturbation_stability(hunt, hpol, hroots, n_perturbations=10, n_food_removed=3,
                             seed=0, params=params)
for entity in ("agent", "ghost", "food"):
    print(f"{entity:5s} {rep.get(entity, 'food_removed=3'):.2f}")
