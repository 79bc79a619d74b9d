import pytest

from cyclic_afp import CyclicMap, load_bundled


@pytest.fixture(scope="session")
def specs():
    names = ("example_3_8", "example_4_12", "example_4_15", "example_cyclic_seq")
    return {n: load_bundled(n) for n in names}


@pytest.fixture(scope="session")
def maps(specs):
    return {n: CyclicMap.from_spec(s) for n, s in specs.items()}


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
