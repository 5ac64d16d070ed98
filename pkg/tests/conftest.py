import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geocompass.alphabet import Alphabet
from geocompass.decoders import make_flat_linear, make_pad_growing_mlp, make_sphere, make_toy_mlp

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def toy_mlp():
    return make_toy_mlp(d=6, L=5, hidden=16, seed=42, out_scale=2.0)


@pytest.fixture(scope="session")
def flat_linear():
    return make_flat_linear(d=4, L=3, seed=1)


@pytest.fixture(scope="session")
def sphere():
    return make_sphere(1.0)


@pytest.fixture(scope="session")
def pad_growing():
    return make_pad_growing_mlp(d=16, L=12, seed=0)


@pytest.fixture(scope="session")
def tiny_alphabet():
    return Alphabet("AG")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -------------------------------------------------- acceptance summary lines

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = dict(report.user_properties).get("measured", "")
        _ACCEPTANCE[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{status}  {name}  {detail}")
