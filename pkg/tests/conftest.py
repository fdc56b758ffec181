import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from templatent.generators import make_rng
from templatent.graph import DynamicGraph, GraphSnapshot
from templatent.latent import random_space

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_snapshot(rng: np.random.Generator, n: int, p: float = 0.3, weighted: bool = False) -> GraphSnapshot:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    w = rng.uniform(0.5, 2.0, keep.sum()) if weighted else None
    return GraphSnapshot.from_edges(n, iu[keep], ju[keep], w)


def random_instance(seed: int, n: int, k: int, T: int, p: float = 0.3, weighted: bool = False):
    rng = make_rng(seed)
    G = DynamicGraph(tuple(random_snapshot(rng, n, p, weighted) for _ in range(T)))
    spaces = [random_space(n, k, rng) for _ in range(T)]
    return G, spaces, rng


@pytest.fixture
def rng():
    return make_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool | None, detail: str) -> None:
    """Log one acceptance line; ``passed=None`` marks a skipped criterion."""
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {number}: {status} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
