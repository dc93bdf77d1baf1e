from __future__ import annotations

import json
from pathlib import Path

import pytest

from hykge.kg import load_graph_files
from hykge.pipeline import PipelineConfig, load_deps

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

QUERY = "Which medicine should I take for heartburn?"


@pytest.fixture(scope="session")
def fixture_graph():
    return load_graph_files(FIXTURES / "entities.jsonl", FIXTURES / "triples.tsv")


@pytest.fixture
def workspace(tmp_path, fixture_graph):
    """Snapshot plus a doubles-backed config inside a temp directory."""
    fixture_graph.save(tmp_path / "graph.hykg")
    config = {
        "providers": "doubles",
        "graph_path": "graph.hykg",
        "entity_index_path": "entities.idx",
        "ho_cache_path": "ho_cache.jsonl",
        "stopwords_path": str(FIXTURES / "stopwords.txt"),
        "generator_fixtures": str(FIXTURES / "generator.json"),
    }
    (tmp_path / "config.json").write_text(json.dumps(config), encoding="utf-8")
    return tmp_path


@pytest.fixture
def fixture_config(workspace):
    from hykge.pipeline import load_config

    return load_config(workspace / "config.json")


@pytest.fixture
def fixture_deps(fixture_config):
    return load_deps(fixture_config)


@pytest.fixture
def default_config():
    return PipelineConfig(providers="doubles")


# --- acceptance summary ---------------------------------------------------------

_CRITERIA: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    ok = report.passed and _CRITERIA.get(number, (title, True))[1]
    _CRITERIA[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")
