import os

import pytest

import quadplan

SINGLE_ROOM = "Saya ingin mengambil barang di lemari lab, kemudian ingin menyoldernya."


@pytest.fixture(scope="module")
def world():
    return quadplan.default_world()


def test_world_vocabulary(world):
    assert world.home == "robot_home"
    assert "lift_jauh" in world.waypoint_names
    assert "pantry" in world.zone_names
    names = [v["name"] for v in quadplan.vocabulary(world)]
    assert "lift_jauh" in names
    x, y = world.pose("lift_jauh")
    assert isinstance(x, float) and isinstance(y, float)
    with pytest.raises(KeyError):
        world.pose("rooftop")


def test_lookup_suggests_near_miss(world):
    found, suggestion = world.lookup("lift_jauh")
    assert found == "lift_jauh" and suggestion is None
    found, suggestion = world.lookup("lift_jauhh")
    assert found is None and suggestion == "lift_jauh"


def test_parse_and_validate(world):
    ok = quadplan.validate_plan(
        {"response": {"actions": [{"command": "goto", "parameters": {"waypoint": "depan_lemari"}}]}}, world
    )
    assert ok["ok"] and ok["defects"] == []
    assert ok["plan"] == {"actions": [{"command": "goto", "parameters": {"waypoint": "depan_lemari"}}]}

    bad = quadplan.validate_plan('{"actions":[{"command":"goto","parameters":{"waypoint":"lift_jauhh"}}]}', world)
    assert not bad["ok"]
    assert bad["defects"][0]["kind"] == "unknown_waypoint"

    broken = quadplan.parse_plan("{not json")
    assert not broken["ok"] and broken["defects"][0]["kind"] == "malformed_json"


def test_mock_grounding(world):
    outcome = quadplan.ground(world, SINGLE_ROOM)
    assert outcome["stage"] == "done"
    targets = [a["parameters"]["waypoint"] for a in outcome["plan"]["actions"]]
    assert targets == ["depan_lemari", "depan_meja_solder"]

    system_text, user_text, digest = quadplan.build_prompt(world, SINGLE_ROOM)
    assert SINGLE_ROOM in user_text
    assert "lift_jauh" in system_text
    assert len(digest) == 64


def test_plan_path(world):
    start = world.pose("robot_home")
    path = quadplan.plan_path(world, start, "lift_jauh")
    assert path["goal"] == "lift_jauh"
    assert path["length_m"] > 0
    assert len(path["cells"]) >= 2


def test_run_mission(world):
    plan = {
        "actions": [
            {"command": "goto", "parameters": {"waypoint": "depan_lemari"}},
            {"command": "wait", "parameters": {"duration": 1.0}},
        ]
    }
    record = quadplan.run_mission(world, plan, seed=3)
    assert record["phase"] == "completed"
    assert record["transitions"][0]["phase"] == "pending"
    assert record["transitions"][-1]["phase"] == "completed"
    assert record == quadplan.run_mission(world, plan, seed=3)

    failed = quadplan.run_mission(
        world, plan, faults=[{"kind": "arrival_failure", "probability": 1.0, "waypoint": "depan_lemari"}]
    )
    assert failed["phase"] == "failed"

    with pytest.raises(ValueError):
        quadplan.run_mission(world, {"actions": [{"command": "goto", "parameters": {"waypoint": "x"}}]})
    with pytest.raises(ValueError):
        quadplan.run_mission(world, plan, policy="pray")


def test_run_suite(world):
    suite = os.path.join(quadplan.data_dir(), "suites", "paper_replica.json")
    result = quadplan.run_suite(world, suite, jobs=2)
    rates = [s["success_rate"] for s in result["summaries"]]
    attempts = [s["attempts"] for s in result["summaries"]]
    assert rates == [100.0, 96.0, 90.0, 100.0]
    assert attempts == [15, 25, 20, 20]
    assert len(result["records"]) == 80
    assert "not comparable" in result["report"]
    with pytest.raises(ValueError):
        quadplan.run_suite(world, "/nonexistent/suite.json")


def test_text_helpers():
    assert quadplan.edit_distance("kitten", "sitting") == 3
    assert quadplan.canonicalize("  Lift  Jauh ") == quadplan.canonicalize("lift jauh")
