"""Shared benchmark models and flows for the test suite.

Naming: INV_SQUARE is the hard-truncated inverse-square density (identity
and moment checks only: its support edge is a jump, which the derivative
formulas do not allow); TAPERED is the admissible polynomially-tapered
version; LOG_TYPE the borderline family with logarithmic small-jump growth;
FULL_STABLE the untruncated heavy-tail model driving the Harnack battery
and the exact one-dimensional oracle.
"""

import math

import numpy as np
import pytest

from levyharnack.flow import FlowSpec
from levyharnack.levy_model import (LevyModel, WeightFunction, flat_profile,
                                    log_type_profile, power_weight,
                                    stable_profile, tapered_stable_profile)


def make_inv_square(eps=0.02):
    return LevyModel(1, stable_profile(1.0, 1.0, 1, r0=1.0), truncation_eps=eps)


def make_tapered(eps=0.02):
    return LevyModel(1, tapered_stable_profile(1.0, 1.0, 1, 1.0, 2.0),
                     truncation_eps=eps)


def make_log_type(eps=0.02, d=1):
    return LevyModel(d, log_type_profile(1.0, 1.0, 1.0, 4.0, d), truncation_eps=eps)


def make_full_stable(eps=0.01):
    return LevyModel(1, stable_profile(1.0, 1.0, 1), truncation_eps=eps)


def make_tapered_2d(eps=0.02):
    return LevyModel(2, tapered_stable_profile(1.0 / (2.0 * math.pi), 1.0, 2, 1.0, 2.0),
                     truncation_eps=eps)


def make_flat(c0=1.0, r0=1.0, eps=0.01):
    return LevyModel(1, flat_profile(c0, r0), truncation_eps=eps)


def quartic_mark_base():
    return WeightFunction(
        radial=lambda r: np.minimum(1.0, np.asarray(r, dtype=float) ** 4),
        radial_slope=lambda r: np.where(np.asarray(r) < 1.0,
                                        4.0 * np.asarray(r, dtype=float) ** 3, 0.0),
        family="capped-quartic", constant_beyond=(1.0, 1.0))


@pytest.fixture(scope="session")
def inv_square():
    return make_inv_square()


@pytest.fixture(scope="session")
def tapered():
    return make_tapered()


@pytest.fixture(scope="session")
def log_type():
    return make_log_type()


@pytest.fixture(scope="session")
def full_stable():
    return make_full_stable()


@pytest.fixture(scope="session")
def g_cubic():
    return power_weight(3.0)


@pytest.fixture(scope="session")
def ou_flow():
    return FlowSpec(1, A=-0.5, sigma=1.0)


@pytest.fixture(scope="session")
def trivial_flow():
    return FlowSpec(1, A=0.0, sigma=1.0)
