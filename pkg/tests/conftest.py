import json
import os

import numpy as np
import pytest

from fleetsim.config import load_scenario


@pytest.fixture(scope="session")
def default_config():
    return load_scenario()


TOY_OVERRIDES = {
    "vehicles": [
        {"name": "gun", "firepower": 4, "material": 0, "personnel": 0,
         "components": {"frame": 1, "gun_kit": 1}},
        {"name": "box", "firepower": 0, "material": 3, "personnel": 1,
         "components": {"frame": 1, "cargo_kit": 1}},
    ],
    "components": [
        {"name": "frame", "repair_hours": 2, "damage_factor": 0.2},
        {"name": "gun_kit", "repair_hours": 2, "damage_factor": 0.2},
        {"name": "cargo_kit", "repair_hours": 2, "damage_factor": 0.2},
    ],
    "initial_vehicle_stock": 2,
    "initial_component_stock": 2,
    "planning_horizon_hours": 6,
    "station_capacity": 4,
}


@pytest.fixture(scope="session")
def toy_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "toy.json"
    path.write_text(json.dumps(TOY_OVERRIDES))
    return load_scenario(path)


def scenario_with(tmp_path, **overrides):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(overrides))
    return load_scenario(path)
