"""Python access to the quadplan pipeline: map loading, plan validation,
mock grounding, path planning, simulated missions and suite replay."""

import json
import os

from . import _quadplan
from ._quadplan import (
    PromptError,
    SuiteError,
    World,
    WorldError,
    build_prompt,
    canonicalize,
    edit_distance,
    load_world,
    mock_ground,
    parse_world,
)

__version__ = _quadplan.__version__

__all__ = [
    "PromptError",
    "SuiteError",
    "World",
    "WorldError",
    "build_prompt",
    "canonicalize",
    "default_world",
    "edit_distance",
    "ground",
    "load_world",
    "mock_ground",
    "parse_plan",
    "parse_world",
    "plan_path",
    "run_mission",
    "run_suite",
    "validate_plan",
    "vocabulary",
]


def data_dir():
    return os.environ.get("QUADPLAN_DATA_DIR", _quadplan.DATA_DIR)


def default_world():
    return load_world(os.path.join(data_dir(), "maps", "tower2_floor9.json"))


def _text(plan):
    return plan if isinstance(plan, str) else json.dumps(plan)


def parse_plan(plan):
    """{"ok", "plan"?, "defects"} for a plan given as JSON text or a dict."""
    return json.loads(_quadplan.parse_plan_json(_text(plan)))


def validate_plan(plan, world):
    return json.loads(_quadplan.validate_plan_json(_text(plan), world))


def vocabulary(world):
    return json.loads(world.vocabulary_json())


def ground(world, instruction):
    """Grounding outcome with the offline keyword provider."""
    return json.loads(_quadplan.ground_json(world, instruction))


def plan_path(world, start, goal):
    return json.loads(_quadplan.plan_path_json(world, start[0], start[1], goal))


def run_mission(world, plan, seed=1, faults=(), policy="abort_mission"):
    return json.loads(_quadplan.run_mission_json(world, _text(plan), seed, json.dumps(list(faults)), policy))


def run_suite(world, suite_path, jobs=1):
    return json.loads(_quadplan.run_suite_json(world, str(suite_path), jobs))
