import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


@pytest.fixture(scope="session")
def configs_dir():
    return ROOT / "configs"


def observed_order(errors, ratio=2.0):
    """Successive ``log(e_k / e_{k+1}) / log(ratio)``."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


def refined(ext1, ext2, n1, n2, levels=3):
    """Node counts for repeated halving of the spacing."""
    return [(ext1, ext2, (n1 - 1) * 2**k + 1, (n2 - 1) * 2**k + 1) for k in range(levels)]


ACCEPTANCE = []


def acceptance_line(criterion, label, passed, detail, seconds):
    """Record and print one PASS/FAIL line; all lines are repeated in the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion} [{label}]: {detail} ({seconds:.1f} s)"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
