# # The clustering objective on small graphs
#
# On a handful of states we can enumerate every two-way partition and see
# how close seeded restarts get to the true optimum, and how the final
# objective falls as k grows.
#
#     python3 demos/clustering_objective.py

# In[1]:

import itertools

import numpy as np

from ssx.env import enumerate_reachable, four_rooms_env
from ssx.evalharness import k_sweep
from ssx.metastates import cluster_meta_states, partition_objective, spectral_embed
from ssx.pathgraph import build_gamma, out_path_counts
from ssx.policy import TransitionModel, induce_transition_model, value_iteration


# A random 8-state policy graph: every state moves to its ring neighbour and
# to a few random others.

# In[2]:

rng = np.random.default_rng(1)
n = 8
f = rng.random((n, n)) * (rng.random((n, n)) < 0.35)
f[np.arange(n), (np.arange(n) + 1) % n] += 0.5
np.fill_diagonal(f, 0.0)
f /= f.sum(axis=1, keepdims=True)
pm = build_gamma(TransitionModel.from_dense(f))
emb = spectral_embed(pm, 2)


# In[3]:

best = np.inf
for bits in itertools.product([0, 1], repeat=n - 1):
    a = np.array((0,) + bits)
    if a.min() == a.max():
        continue
    counts = out_path_counts(pm, a, 2, weighted=True)
    best = min(best, partition_objective(emb.coords, pm, a, 1.0, 2, counts=counts))

for restarts in (1, 5, 20):
    part = cluster_meta_states(emb, pm, 2, 1.0, seed=0, restarts=restarts, weighted_counts=True)
    print(f"restarts={restarts:2d}: {part.objective:.4f}  (optimum {best:.4f})")


# ## Objective against k on Four Rooms
# The table is for reading the knee by eye; nothing picks k automatically.
# With only five restarts some k land in a poor local minimum, so the curve
# need not fall monotonically.

# In[4]:

env = four_rooms_env(11)
states = enumerate_reachable(env)
_, pol = value_iteration(env, states=states, temperature=0.1)
fr = build_gamma(induce_transition_model(env, pol, states))
for k, obj, dist in k_sweep(fr, None, [2, 3, 4, 5, 6]):
    print(f"k={k}: objective {obj:8.4f}  distance term {dist:.4f}")
