import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bnnreach.neural import MLPArchitecture

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_arch(rng: np.random.Generator, n_in: int, n_out: int, max_hidden: int = 2, max_width: int = 6) -> MLPArchitecture:
    depth = int(rng.integers(0, max_hidden + 1))
    hidden = [int(rng.integers(1, max_width + 1)) for _ in range(depth)]
    acts = [str(rng.choice(["relu", "tanh"])) for _ in hidden]
    return MLPArchitecture((n_in, *hidden, n_out), tuple(acts))


def random_box(rng: np.random.Generator, dim: int, scale: float = 1.0, max_width: float = 1.0):
    c = rng.uniform(-scale, scale, dim)
    r = rng.uniform(0.0, max_width / 2, dim)
    return c - r, c + r


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
