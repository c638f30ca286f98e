"""Strategic-state explanations of stochastic policies on discrete state spaces.

Typical use::

    from ssx import enumerate_reachable, four_rooms_env, four_rooms_params, run_ssx, value_iteration
    env = four_rooms_env(11)
    states = enumerate_reachable(env)
    _, policy = value_iteration(env, states=states)
    result = run_ssx(env, policy, states, four_rooms_params())
"""

__version__ = "0.1.0"

from .env import (
    FourRooms,
    GridState,
    InvalidConfiguration,
    MiniPac,
    PacState,
    RewardScheme,
    StateSpace,
    StateSpaceTruncated,
    enumerate_reachable,
    four_rooms_env,
    minipac_env,
    parse_layout,
    random_live_states,
)
from .metastates import MetaStatePartition, cluster_meta_states, spectral_embed
from .pathgraph import PathMatrix, build_gamma, local_approximation, out_path_counts
from .pipeline import (
    SSXParams,
    SSXResult,
    explain_local,
    four_rooms_params,
    minipac_params,
    run_ssx,
)
from .policy import (
    ScriptedMiniPacPolicy,
    TabularPolicy,
    TransitionModel,
    induce_transition_model,
    value_iteration,
)
from .strategic import Explanation, StrategicSet, greedy_strategic, importance_scores

__all__ = [name for name in dir() if not name.startswith("_")]
