import numpy as np
import pytest

from implicit_hmc.model import TargetModel, banana_model, funnel_model, gaussian_model


def flat_model(dim: int = 1) -> TargetModel:
    """Zero potential: the free particle."""
    return TargetModel(
        "flat", dim, lambda q: 0.0, lambda q: np.zeros(dim), lambda q, v: np.zeros(dim)
    )


def unit_gaussian(dim: int = 1) -> TargetModel:
    return gaussian_model(np.eye(dim))


def builtin_models():
    return {
        "gaussian": gaussian_model(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]])),
        "banana": banana_model(1.0, 100.0),
        "funnel": funnel_model(10),
        "funnel_sd": funnel_model(10, scale="sd"),
    }


def random_point(name, model, rng):
    """A point in the typical set of each model."""
    if name == "banana":
        q1 = rng.normal(scale=0.5)
        return np.array([q1, 100.0 * (q1**2 + 1.0) + rng.normal()])
    if name.startswith("funnel"):
        return np.concatenate([[rng.uniform(-2.0, 2.0)], rng.normal(size=model.dim - 1)])
    return rng.normal(size=model.dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
