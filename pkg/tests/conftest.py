import numpy as np
import pytest

from wrenchforge.geometry import PlanarPose, SpatialPose
from wrenchforge.model import load_model


@pytest.fixture(scope="session")
def paper2d():
    return load_model("paper2d")


@pytest.fixture(scope="session")
def uvms4dof():
    return load_model("uvms4dof")


@pytest.fixture(scope="session")
def paper2d_dual():
    return load_model("paper2d-dual")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_theta(model, rng):
    """Configuration with the vehicle near the origin and joints inside their limits."""
    th = np.zeros(model.n)
    th[:model.d] = rng.uniform(-1.0, 1.0, model.d)
    th[model.d:] = rng.uniform(model.joint_lower, model.joint_upper)
    return th


def origin(model):
    return PlanarPose(0.0, 0.0, 0.0) if model.variant == "planar" else SpatialPose([0, 0, 0], [1, 0, 0, 0])


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record a one-line PASS/FAIL verdict; echoed in the terminal summary."""
    lines = request.config.acceptance_lines

    def record(label, ok, detail=""):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
