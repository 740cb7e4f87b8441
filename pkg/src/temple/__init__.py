"""Template learning for multi-task tabular reinforcement learning."""
from __future__ import annotations

from .environments import (
    LandformMaze,
    TaskDistribution,
    build_maze_mdp,
    ground_truth_templates,
    maze_task,
    sample_task,
)
from .fmtemple import FMTempLe, cluster_models, signature_mismatch
from .kernels import BACKEND
from .learners import QLearner, RMaxLearner, TaskMetrics, VisitLedger, induced_mdp
from .mdp import Policy, TabularMdp, policy_evaluation, value_iteration
from .otemple import OTempLe
from .templates import (
    RankingPermutation,
    TemplateLibrary,
    TransitionTemplate,
    augment,
    find_closest,
    gen_tt,
    tt_distance,
    tt_update,
)

__version__ = "0.1.0"
