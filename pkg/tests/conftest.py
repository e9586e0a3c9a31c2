import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bbtpolar.codec import CodeSpec

settings.register_profile(
    "repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def small_spec():
    return CodeSpec(6, 2, (4, 5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_spec(rng, N, K=None, flavor="bbt", seed=None):
    if K is None:
        K = int(rng.integers(0, N + 1))
    info = tuple(int(i) for i in rng.choice(N, size=K, replace=False))
    if flavor == "ibbt" and seed is None:
        seed = int(rng.integers(0, 2**63))
    return CodeSpec(N, K, info, flavor, seed)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Callable ``log(number, ok, detail)`` collecting one verdict line per criterion."""

    def log(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
