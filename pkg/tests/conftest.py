import math

import numpy as np
import pytest

from epiguide.camera import FisheyeIntrinsics
from epiguide.errors import DomainError

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        cid, title = marker.args
        _acceptance_results.append((cid, title, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    # one line per criterion; parametrized cases must all pass
    merged = {}
    for cid, title, outcome in _acceptance_results:
        ok = merged.get(cid, (title, True))[1] and outcome == "passed"
        merged[cid] = (title, ok)
    terminalreporter.section("acceptance criteria")
    for cid in sorted(merged):
        title, ok = merged[cid]
        terminalreporter.write_line(f"AC{cid:<3} {'PASS' if ok else 'FAIL'}  {title}")


def random_intrinsics(rng, width=1280, height=960):
    """A random lens that passes validation (monotone rho over [0, theta_max])."""
    while True:
        k = (rng.uniform(200, 400), rng.uniform(-30, 30), rng.uniform(-10, 10),
             rng.uniform(-2, 2))
        theta_max = math.radians(rng.uniform(60, 100))
        cx = width / 2 + rng.uniform(-20, 20)
        cy = height / 2 + rng.uniform(-20, 20)
        try:
            return FisheyeIntrinsics(k, cx, cy, width, height, theta_max)
        except DomainError:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def linear_lens():
    return FisheyeIntrinsics((300.0, 0.0, 0.0, 0.0), 640.0, 640.0, 1280, 1280)


@pytest.fixture
def poly_lens():
    return FisheyeIntrinsics((280.0, -20.0, 5.0, -1.0), 640.0, 480.0, 1280, 960)
