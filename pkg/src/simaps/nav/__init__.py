"""Navigation programs over SI maps: a primitive-call DSL, A* planning and execution."""

from .dsl import REGISTRY, PrimitiveCall, Program, make_call, parse_program, pretty
from .executor import (
    AgentState,
    Goal,
    NavConfig,
    Trajectory,
    execute,
    resolve_goal,
    resolve_targets,
)
from .planner import OccupancyView, PlannedPath, make_occupancy, plan_path

__all__ = [
    "REGISTRY", "PrimitiveCall", "Program", "make_call", "parse_program", "pretty",
    "AgentState", "Goal", "NavConfig", "Trajectory", "execute", "resolve_goal",
    "resolve_targets", "OccupancyView", "PlannedPath", "make_occupancy", "plan_path",
]
