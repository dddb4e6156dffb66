from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

from vexor.text import parse_function

settings.register_profile("vexor", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("vexor")

CORPUS = ("gzip", "ex1", "ex2", "ex3", "ex4", "ex5")


def corpus_text(name: str) -> str:
    return resources.files("vexor").joinpath("corpus", f"{name}.vx").read_text()


def corpus_function(name: str):
    return parse_function(corpus_text(name))


@pytest.fixture
def fn():
    """Parse a function from text."""
    return parse_function


def pytest_terminal_summary(terminalreporter):
    import sys
    lines = next((m.RESULTS for k, m in list(sys.modules.items())
                  if k.split(".")[-1] == "test_acceptance" and hasattr(m, "RESULTS")), None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
