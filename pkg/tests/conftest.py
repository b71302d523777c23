import functools

import pytest

from superfedosov.fedosov import build_r
from superfedosov.geometry import BUILTIN_GEOMETRIES, builtin_geometry

CURVED = ["curved_rank2", "conformal_rank2", "hess_rank2", "so3_rank3"]

# criterion number -> (description, passed); filled in by test_acceptance
ACCEPTANCE: dict = {}


@functools.lru_cache(maxsize=None)
def geometry(name, backend=None):
    return builtin_geometry(name, backend)


@functools.lru_cache(maxsize=None)
def fedosov_data(name, K, backend=None):
    return build_r(geometry(name, backend), K=K)


@pytest.fixture(params=BUILTIN_GEOMETRIES)
def any_geometry(request):
    return geometry(request.param)


@pytest.fixture
def flat():
    return geometry("flat")


@pytest.fixture
def curved():
    return geometry("curved_rank2")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        desc, ok = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {desc}")
