"""Shared fixtures: the bundled scene, episodes, and scripted backends."""

import glob
import os

import pytest

from stmrnav.planner import ScriptedBackend
from stmrnav.world import load_episode, load_scene

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), os.pardir,
                           "src", "stmrnav", "fixtures")


def fixture_path(*parts) -> str:
    return os.path.normpath(os.path.join(FIXTURE_DIR, *parts))


@pytest.fixture(scope="session")
def scene():
    return load_scene(fixture_path("riverside.scene"))


@pytest.fixture(scope="session")
def episodes():
    paths = sorted(glob.glob(fixture_path("ep*.episode")))
    assert len(paths) == 10
    return [load_episode(p) for p in paths]


def scripted_factory(episode, index):
    """One fresh scripted backend per episode, keyed by episode id."""
    return ScriptedBackend.from_file(
        fixture_path("scripts", f"{episode.episode_id}.txt"))


# ---------------------------------------------------------------------------
# acceptance verdict reporting
# ---------------------------------------------------------------------------

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    """Print a criterion verdict and queue it for the terminal summary."""
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
