from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from stepgate.backends import ScriptedBackend
from stepgate.env import SimEnv, load_sim_app
from stepgate.store import Dataset, load_instruction_pack


@pytest.fixture(scope="session")
def demo_dir() -> Path:
    return Path(str(resources.files("stepgate").joinpath("data/demo")))


@pytest.fixture(scope="session")
def demo_app(demo_dir):
    return load_sim_app(demo_dir / "simapp.json")


@pytest.fixture(scope="session")
def demo_instructions(demo_dir):
    return load_instruction_pack(demo_dir / "instructions.json")


@pytest.fixture()
def demo_env(demo_app):
    return SimEnv(demo_app)


@pytest.fixture()
def agent_backend(demo_dir):
    return ScriptedBackend.from_file(demo_dir / "scripts" / "agent.txt")


@pytest.fixture()
def critic_backend(demo_dir):
    return ScriptedBackend.from_file(demo_dir / "scripts" / "critic.txt")


@pytest.fixture()
def policy_replies(demo_dir) -> list[str]:
    return ScriptedBackend.from_file(demo_dir / "scripts" / "policy.txt")._replies


@pytest.fixture(scope="session")
def demo_dataset(demo_dir) -> Dataset:
    return Dataset(demo_dir / "dataset")
