"""Risk-aware kinodynamic RRT planners (single, bidirectional and multi-tree) for crowded maps."""
from .kinematics import ControlInput, PlannerParams, RobotState
from .planners import Planner, PlannerKind
from .sim import ConfigError, EpisodeResult, Scenario, load_scenario, run_episode
from .world import MovingObstacle, OccupancyGrid, load_grid

__all__ = [
    "ConfigError",
    "ControlInput",
    "EpisodeResult",
    "MovingObstacle",
    "OccupancyGrid",
    "Planner",
    "PlannerKind",
    "PlannerParams",
    "RobotState",
    "Scenario",
    "load_grid",
    "load_scenario",
    "run_episode",
]

__version__ = "0.1.0"
