import json
import os

import numpy as np
import pytest

from mrpmm.distributions import RenewalDist
from mrpmm.pde import GridSpec, solve_all
from mrpmm.presets import poisson_model, reference_model


@pytest.fixture(scope="session")
def ref():
    return reference_model()


@pytest.fixture(scope="session")
def weibull_mix():
    """Weibull shapes 1.5 / 0.8, alpha = -0.75; used only away from s = 0."""
    return reference_model(dist_plus=RenewalDist.weibull(1.5, 0.5),
                           dist_minus=RenewalDist.weibull(0.8, 0.3))


@pytest.fixture(scope="session")
def sym():
    return poisson_model(gamma=2.0, alpha=0.3)


@pytest.fixture(scope="session")
def ref_solution(ref):
    return solve_all(ref, GridSpec.build(ref, 0.01))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance bookkeeping -----------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def record():
    """``record(key, passed, detail)`` stores one acceptance verdict and prints it."""

    def _record(key, passed, detail):
        prev = ACCEPTANCE.get(key)
        if prev is not None:  # several tests may feed one criterion
            passed = passed and prev["passed"]
            detail = prev["detail"] + "; " + detail
        ACCEPTANCE[key] = {"passed": bool(passed), "detail": detail}
        print(f"{key} {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
        v = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if v['passed'] else 'FAIL'}: {v['detail']}")
    target = os.environ.get("MRPMM_ACCEPTANCE_OUT")
    if target:
        with open(target, "w") as fh:
            json.dump(ACCEPTANCE, fh, indent=2, sort_keys=True)
