import json
import sys
from functools import lru_cache
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def goldens():
    return json.loads((HERE / "goldens.json").read_text())


@lru_cache(maxsize=None)
def single_source(d: int, n: float, m: float):
    """Stabilized single-source state, shared across test modules; do not mutate."""
    from sandpile.verify import stabilized_single_source

    return stabilized_single_source(d, n, m)


@pytest.fixture(scope="session")
def run_1e4():
    return single_source(2, 1e4, 10.0)


@pytest.fixture(scope="session")
def run_1e5():
    return single_source(2, 1e5, 10.0)


# acceptance bookkeeping: criterion number -> list of (passed, detail)
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {status}  " + "; ".join(d for _, d in parts))
