"""gridmeta: hierarchical meta-RL laboratory over trap gridworlds.

Options-based agents with epsilon-greedy policies at both levels,
first-order meta-training across procedurally generated tasks,
count-based intrinsic exploration, a performance-gated curriculum, and a
random-search tuner with median pruning.
"""

from .agent import AgentParams, HyperParams, init_agent
from .curriculum import CurriculumSchedule, GateSpec, default_schedule, level_spec
from .gridworld import GridTask, RewardSpec, generate_task
from .metatrain import AblationFlags, MetaConfig, meta_train
from .metrics import MetricsRecord

__all__ = [
    "AblationFlags",
    "AgentParams",
    "CurriculumSchedule",
    "GateSpec",
    "GridTask",
    "HyperParams",
    "MetaConfig",
    "MetricsRecord",
    "RewardSpec",
    "default_schedule",
    "generate_task",
    "init_agent",
    "level_spec",
    "meta_train",
]

__version__ = "0.1.0"
