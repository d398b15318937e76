import numpy as np
import pytest

from lowdegtomo.frames import (
    GATES,
    build_f,
    build_g_shadow,
    g_min_closed_form,
    g_min_solver,
    left_kernel,
    rotated_frame,
)


@pytest.fixture(scope="session")
def f1():
    return build_f(1)


@pytest.fixture(scope="session")
def f2():
    return build_f(2)


@pytest.fixture(scope="session")
def gsh():
    return build_g_shadow()


@pytest.fixture(scope="session")
def gmin():
    return g_min_closed_form()


@pytest.fixture(scope="session")
def gmin_solved():
    return g_min_solver()


@pytest.fixture(scope="session")
def kernel1(f1):
    return left_kernel(f1)


@pytest.fixture(scope="session")
def kernel2(f2):
    return left_kernel(f2)


@pytest.fixture(scope="session")
def rotated_tables(gmin):
    """Rotated-minimized tables and objectives for the standard gates."""
    out = {}
    for name in ("iswap", "cnot", "cz", "swap", "t1", "tt"):
        out[name] = rotated_frame(GATES[name], gmin, minimize=True)
    return out
