import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from casimirlab.lifshitz import MatsubaraGrid  # noqa: E402
from casimirlab.materials import MaterialLibrary  # noqa: E402
from casimirlab.rig import RigConfig, build_mirror, casimir_gradient_model  # noqa: E402


@pytest.fixture(scope="session")
def library():
    return MaterialLibrary()


@pytest.fixture(scope="session")
def au(library):
    return build_mirror("gold", library)


@pytest.fixture(scope="session")
def ito(library):
    return build_mirror("ito", library)


@pytest.fixture(scope="session")
def grid300():
    return MatsubaraGrid(300.0)


@pytest.fixture(scope="session")
def gold_table():
    return casimir_gradient_model(RigConfig(plate="gold"))


@pytest.fixture(scope="session")
def ito_table():
    return casimir_gradient_model(RigConfig(plate="ito"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
