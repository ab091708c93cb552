import numpy as np
import pytest

from tilefuse.geometry import GridConfig, plan_scale
from tilefuse.stitch import PatchFeatureGrid

_acceptance = {}


def toy_plan(T, t, p=1):
    cfg = GridConfig(T * p, p, min_token_width=2)
    return plan_scale(cfg, t * p)


def random_windows(rng, plan, d, scale_id=0, layer_id=1):
    n = plan.windows_per_side
    t = plan.token_width
    windows = {(i, j): rng.normal(size=(t, t, d)) for i in range(n) for j in range(n)}
    patches = [PatchFeatureGrid(scale_id, layer_id, k, v) for k, v in windows.items()]
    return windows, patches


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        status = "PASS" if _acceptance[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
