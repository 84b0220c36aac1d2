import re
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from basinflow.grid import Raster


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, when any were run."""
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            match = re.search(r"test_acceptance.*test_criterion_(\d+)",
                              getattr(rep, "nodeid", ""))
            if match and getattr(rep, "when", "call") == "call":
                outcomes[int(match.group(1))] = status == "passed"
    if not outcomes:
        return
    try:
        from test_acceptance import PASS_DETAILS
    except ImportError:
        PASS_DETAILS = {}
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(outcomes):
        status = "PASS" if outcomes[criterion] else "FAIL"
        detail = PASS_DETAILS.get(criterion, "")
        suffix = f" - {detail}" if detail and outcomes[criterion] else ""
        terminalreporter.write_line(f"criterion {criterion}: {status}{suffix}")


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_raster(values, cell_size=1000.0, nodata=-9999.0):
    return Raster(values=np.asarray(values, dtype=np.float64),
                  cell_size=cell_size, nodata=nodata)


@pytest.fixture
def strip_dem():
    """1x3 west-to-east downhill strip."""
    return make_raster([[3.0, 2.0, 1.0]])
