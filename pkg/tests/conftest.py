import os

import pytest

from adaptr.cli import run_pipeline

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY_CONFIG = os.path.join(ROOT, "configs", "toy.json")


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """One end-to-end pipeline run on the shipped toy config."""
    out = str(tmp_path_factory.mktemp("toy"))
    run_pipeline(out, config=TOY_CONFIG)
    return out


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
