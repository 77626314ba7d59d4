import functools
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@functools.lru_cache(maxsize=None)
def _mms_problem():
    from mhdtrace.driver.problems import mms_problem
    return mms_problem()


def mms_trace_system(n=2, p=1):
    """Condensed steady trace system of the default manufactured solution."""
    from mhdtrace.hdg import BasisP, VolumeState, assemble_trace_system, build_mesh, project
    pr = _mms_problem()
    mesh = build_mesh(n, n, pr.bounds)
    basis = BasisP(p)
    st = VolumeState.zeros(mesh.n_elements, p)
    st.coeffs[:, 4:6] = project(mesh, basis, pr.exact["u"])
    st.coeffs[:, 8:10] = project(mesh, basis, pr.exact["b"])
    T = assemble_trace_system(mesh, basis, pr.params, st, boundary=pr.boundary, f=pr.f, g=pr.g)
    return T, mesh, basis, pr


@pytest.fixture(scope="session")
def mms_problem_spec():
    return _mms_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled in by test_acceptance.py
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
