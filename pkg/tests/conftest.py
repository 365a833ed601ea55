"""Shared fixtures: the bundled example system and its companions."""

import pytest

from uiokit.demo import (
    convergence_model,
    counterexample_model,
    reference_intermediates,
    reference_kernel_matrix,
    reference_model,
    reference_uio,
)


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def ref_kernel():
    return reference_kernel_matrix()


@pytest.fixture(scope="session")
def ref_uio():
    return reference_uio()


@pytest.fixture(scope="session")
def ref_intermediates():
    return reference_intermediates()


@pytest.fixture(scope="session")
def no_uio_model():
    return counterexample_model()


@pytest.fixture(scope="session")
def stable_model():
    return convergence_model()
