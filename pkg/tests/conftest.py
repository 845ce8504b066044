import pytest

from ebpd.conceptualizer import learn_schema
from ebpd.generators import listing1_experience, rover_domain, stack_domain, stack_learning_experiences
from ebpd.planner import SchemaLibrary


@pytest.fixture(scope="session")
def stack_dom():
    return stack_domain()


@pytest.fixture(scope="session")
def rover_dom():
    return rover_domain()


@pytest.fixture(scope="session")
def listing1():
    return listing1_experience()


@pytest.fixture(scope="session")
def stack_schemata(stack_dom):
    return {cls: learn_schema(e, stack_dom) for cls, e in stack_learning_experiences().items()}


@pytest.fixture(scope="session")
def stack_lib(stack_schemata):
    return SchemaLibrary(list(stack_schemata.values()))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
