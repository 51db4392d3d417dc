import time

import numpy as np
import pytest

from confderham.catalog import ModelSpaceSpec, build_model_space

_ACCEPTANCE_LINES = []


def space(kind, n=2, **kw):
    return build_model_space(ModelSpaceSpec(kind, n=n, **kw))


@pytest.fixture
def unit_square():
    return space("euclidean_box", 2, resolution=1)


@pytest.fixture
def square4():
    return space("euclidean_box", 2, resolution=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class CriterionRecorder:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.start = time.perf_counter()
        self.details = []
        self.ok = True

    def check(self, cond, detail):
        self.details.append(("ok " if cond else "BAD ") + detail)
        self.ok &= bool(cond)
        return cond

    def finish(self, budget):
        elapsed = time.perf_counter() - self.start
        self.check(elapsed < budget, f"runtime {elapsed:.1f}s < {budget:.0f}s")
        status = "PASS" if self.ok else "FAIL"
        line = f"[{status}] criterion {self.number}: {self.title} ({elapsed:.1f}s)"
        _ACCEPTANCE_LINES.append((self.number, line, list(self.details)))
        print("\n" + line)
        for d in self.details:
            print("    " + d)
        assert self.ok, line + "\n" + "\n".join(self.details)


@pytest.fixture
def criterion():
    return CriterionRecorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line, details in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
        for d in details:
            terminalreporter.write_line("    " + d)
