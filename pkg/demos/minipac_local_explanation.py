# # MiniPac: explaining a policy around one board
#
# The MiniPac state space is too large to enumerate, so every explanation is
# local: only boards within N moves of a root board are clustered.
#
#     python3 demos/minipac_local_explanation.py

# In[1]:

import warnings
from pathlib import Path

import numpy as np

from ssx.env import minipac_env, random_live_states
from ssx.pipeline import explain_local, minipac_params
from ssx.policy import scripted_minipac_policy
from ssx.render import render_explanation

warnings.simplefilter("ignore", RuntimeWarning)


# In[2]:

env = minipac_env(scheme="EAT")
policy = scripted_minipac_policy(env)
print(env.layout.to_text())


# Pick a board with the ghost at least three moves away, then explain the
# EAT policy within six moves of it.

# In[3]:

root = random_live_states(env, 1, np.random.default_rng(7), min_ghost_distance=3)[0]
params = minipac_params()
res = explain_local(env, policy, root, params)
print(len(res.states), "local boards at N =", params.horizon)


# In[4]:

for m, ss in enumerate(res.explanation.strategic):
    if ss.priority is None:
        continue
    s = res.states[ss.priority]
    note = " degenerate" if ss.degenerate else ""
    print(f"meta-state {m}:{note} agent {s.agent_pos}, ghost {s.ghost_pos}, "
          f"food left {bin(s.food_mask).count('1')}")

pick = res.states[res.root_priority()]
print("root's priority board puts the agent at", pick.agent_pos, "from", root.agent_pos)


# The same root under the HUNT scheme: once the pill is gone the scripted
# expert chases the ghost, and strategic boards move toward it.

# In[5]:

hunt = minipac_env(scheme="HUNT")
hroot = random_live_states(hunt, 1, np.random.default_rng(7), min_ghost_distance=3,
                           pill_eaten=True)[0]
hres = explain_local(hunt, scripted_minipac_policy(hunt), hroot, params)
h = hres.states[hres.root_priority()]
before = np.hypot(*np.subtract(hroot.agent_pos, hroot.ghost_pos))
after = np.hypot(*np.subtract(h.agent_pos, h.ghost_pos))
print(f"HUNT: agent-ghost distance {before:.2f} at the root, {after:.2f} at the priority board")


# In[6]:

Path("minipac.svg").write_text(render_explanation(res.explanation, env, res.states))
print("wrote minipac.svg")
