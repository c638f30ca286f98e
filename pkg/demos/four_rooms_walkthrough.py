# # Four Rooms: meta-states and strategic states
#
# A value-iteration expert walks from the lower-left room to the goal in the
# upper-right corner. We cluster its reachable states into four meta-states
# and pick strategic states inside each one. Run from the repository root:
#
#     python3 demos/four_rooms_walkthrough.py
#
# The script writes `four_rooms.svg` into the working directory.

# In[1]:

import warnings
from pathlib import Path

import numpy as np

from ssx.env import enumerate_reachable, four_rooms_env
from ssx.pipeline import four_rooms_params, run_ssx
from ssx.policy import value_iteration
from ssx.render import render_explanation


# In[2]:

env = four_rooms_env(11)
states = enumerate_reachable(env)
print(len(states), "reachable cells; doors at", sorted(env.doors()))

# A softmax over Q-values keeps the policy stochastic, so several paths
# carry weight and the path likelihoods are informative.
_, policy = value_iteration(env, states=states, temperature=0.1)


# In[3]:

result = run_ssx(env, policy, states, four_rooms_params())
part = result.partition
print("objective history:", np.round(part.history, 4))
print("meta-state sizes:", np.bincount(part.assignment))


# The clusters should line up with the rooms. Count how many cells share the
# majority label of their room (doorways are left out, they belong to two rooms).

# In[4]:

rooms = env.rooms()
agree = 0
cells = 0
for room in set(rooms.values()) - {-1}:
    idx = [i for i, s in enumerate(states) if rooms.get(s.agent_pos) == room]
    labels = part.assignment[idx]
    agree += np.bincount(labels).max()
    cells += len(idx)
print(f"room purity: {agree / cells:.3f}")


# In[5]:

for m, ss in enumerate(result.explanation.strategic):
    picks = [states[i].agent_pos for i in ss.states]
    tag = " (goal)" if m == result.explanation.goal_meta_state else ""
    print(f"meta-state {m}{tag}: strategic cells {picks}, gains {np.round(ss.gains, 2)}")


# In[6]:

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    svg = render_explanation(result.explanation, env, states)
Path("four_rooms.svg").write_text(svg)
print("wrote four_rooms.svg")
