import os

import numpy as np
import pytest

from sepapprox.exterior import Variant
from sepapprox.mesh import build_structured_mesh
from sepapprox.tables import equilibrated_nodes, load_or_build

CACHE = os.environ.get("SEPAPPROX_TABLE_CACHE",
                       os.path.join(os.path.dirname(__file__), "..", ".cache", "tables"))


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_mesh(4)


@pytest.fixture(scope="session")
def mesh5():
    return build_structured_mesh(5)


@pytest.fixture(scope="session")
def nodes16():
    return equilibrated_nodes(16)


@pytest.fixture(scope="session")
def eta_grid(nodes16):
    return nodes16.refined(4)


@pytest.fixture(scope="session")
def interior_tables():
    """N=16 disk tables for both element types (built once, then cached)."""
    return {(t, Variant()): load_or_build(CACHE, t, None, 16) for t in (1, 2)}


@pytest.fixture(scope="session")
def top_neumann_tables():
    v = Variant.parse("top-neumann")
    return {(t, v): load_or_build(CACHE, t, v, 16) for t in (1, 2)}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------ acceptance report

ACCEPTANCE = {}


def record(key, passed, message):
    """Register one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[key] = (bool(passed), message)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(k):
        head = k.split()[0]
        return (int("".join(c for c in head if c.isdigit())), k)

    for key in sorted(ACCEPTANCE, key=order):
        ok, msg = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {msg}")
