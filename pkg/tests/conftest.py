import json

import pytest

from lobphys.cli import main


def run_cli(*args):
    """Run the command line in-process; returns the exit status."""
    return main([str(a) for a in args])


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """A default-length synthetic capture with a planted depth of 30 ticks."""
    out = tmp_path_factory.mktemp("synth") / "data"
    assert run_cli("synth", "--seed", 5, "--out", out, "-q") == 0
    return out


@pytest.fixture(scope="session")
def synth_manifest(synth_dir):
    return json.loads((synth_dir / "manifest.json").read_text())


def pytest_terminal_summary(terminalreporter):
    import sys

    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
