import numpy as np
import pytest

REF_W = [0.1, 0.2, 0.3, 0.4]


@pytest.fixture
def ref_w():
    return np.array(REF_W)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
