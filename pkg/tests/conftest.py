"""Shared solved-scenario fixtures.

Solves are the expensive part of the suite, so each named scenario is solved
once per session (at the resolutions the tests need) and shared.
"""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from degenfb.cli import build_grid, build_scenario, parse_config
from degenfb.minimizer import solve

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")


def scenario_path(name):
    return os.path.join(SCENARIO_DIR, name)


class SolvedScenario:
    def __init__(self, config_name, resolution):
        cfg = parse_config(scenario_path(config_name))
        cfg["grid.resolution"] = resolution
        self.config = cfg
        self.scenario = build_scenario(cfg)
        self.grid = build_grid(cfg)
        t0 = time.time()
        self.result = solve(self.grid, self.scenario)
        self.solve_seconds = time.time() - t0

    @property
    def field(self):
        return self.result.field

    @property
    def gamma(self):
        return self.config["gamma"]

    @property
    def manifold(self):
        return self.scenario.manifold


_CACHE = {}


def solved(config_name, resolution):
    key = (config_name, resolution)
    if key not in _CACHE:
        _CACHE[key] = SolvedScenario(config_name, resolution)
    return _CACHE[key]


@pytest.fixture(scope="session")
def stokes129():
    return solved("stokes.cfg", 129)


@pytest.fixture(scope="session")
def stokes257():
    return solved("stokes.cfg", 257)


@pytest.fixture(scope="session")
def stokes513():
    return solved("stokes.cfg", 513)


@pytest.fixture(scope="session")
def curved257():
    return solved("curved.cfg", 257)


@pytest.fixture(scope="session")
def aperture025():
    return solved("aperture-gamma025.cfg", 257)


@pytest.fixture(scope="session")
def aperture100():
    return solved("aperture-gamma100.cfg", 257)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
