from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    # keep the calibration record next to the test cache unless overridden
    import os
    os.environ.setdefault("BRANCHER_CACHE",
                          str(config.rootpath / ".pytest_cache" / "brancher"))


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def emit(criterion: int, passed: bool, detail: str) -> bool:
        lines.append((criterion, f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"))
        return passed
    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
