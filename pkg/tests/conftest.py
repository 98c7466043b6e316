"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion at the end of the run."""
import pytest

ACCEPTANCE = {}


class Verdict:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        return bool(self.checks) and all(ok for _, ok, _ in self.checks)

    def failures(self):
        return [f"{name} ({detail})" if detail else name for name, ok, detail in self.checks if not ok]

    def summary(self):
        return "; ".join(f"{name}: {detail}" for name, _, detail in self.checks if detail)

    def conclude(self):
        assert self.passed, f"criterion {self.number} failed: " + "; ".join(self.failures())


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    verdict = Verdict(number, title)
    ACCEPTANCE[number] = verdict
    return verdict


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        v = ACCEPTANCE[number]
        status = "PASS" if v.passed else "FAIL"
        tr.write_line(f"criterion {number:2d} {status}  {v.title}  [{v.summary()}]")
