import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    # reference tables are cached per session, never in the user's home
    monkeypatch.setenv("PINNBENCH_CACHE", str(tmp_path_factory.getbasetemp() / "cache"))


# --- acceptance reporting ---------------------------------------------------

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


class Criterion:
    """Context manager that times a criterion, collects failed checks and
    records one PASS/FAIL line whatever happens inside."""

    def __init__(self, lines, number, title, budget_s):
        self.lines, self.number, self.title, self.budget = lines, number, title, budget_s
        self.failed: list[str] = []
        self.notes: list[str] = []
        self.charged = 0.0

    def check(self, ok, what):
        if not ok:
            self.failed.append(what)
        return ok

    def note(self, text):
        self.notes.append(text)

    def charge(self, seconds):
        """Count work done outside the block (e.g. in a fixture) toward the budget."""
        self.charged += seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0 + self.charged
        if elapsed > self.budget:
            self.failed.append(f"runtime {elapsed:.1f}s over {self.budget:.0f}s budget")
        if exc_type is not None:
            self.failed.append(f"{exc_type.__name__}: {exc}")
        ok = not self.failed
        detail = "; ".join(self.notes + self.failed)
        line = f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'} [{elapsed:7.1f}s] {self.title}"
        if detail:
            line += f" -- {detail}"
        self.lines.append((self.number, line))
        print(line)
        if exc_type is None and not ok:
            raise AssertionError(line)
        return False


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_LINES]

    def make(number, title, budget_s):
        return Criterion(lines, number, title, budget_s)

    return make


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
